#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pddkit/pdd.hpp"

namespace pddkit {
namespace {

PeriodicSet unit_cube() { return PeriodicSet{LatticeBasis(), Motif({Vec3::Zero()}, {6}), "cube"}; }

PeriodicSet cesium_chloride() {
  return PeriodicSet{LatticeBasis::cubic(4.0), Motif({Vec3::Zero(), Vec3(0.5, 0.5, 0.5)}, {55, 17}), "CsCl"};
}

void expect_pdd_near(const Pdd& a, const Pdd& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.k, b.k);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.weights[i], b.weights[i], 1e-12) << "row " << i;
  EXPECT_LE((a.rows - b.rows).cwiseAbs().maxCoeff(), tol);
  EXPECT_EQ(a.species, b.species);
}

TEST(Knn, CubicFaceNeighbours) {
  const auto d = knn_distances(unit_cube(), 6);
  for (int j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(d(0, j), 1.0);
}

TEST(Knn, CubicSecondShell) {
  const auto d = knn_distances(unit_cube(), 18);
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(d(0, j), 1.0, 1e-15);
  for (int j = 6; j < 18; ++j) EXPECT_NEAR(d(0, j), std::sqrt(2.0), 1e-15);
}

TEST(Knn, TriclinicMatchesBruteForce) {
  const auto s = random_periodic_set(2024, 3, 0.25);
  EXPECT_LE((knn_distances(s, 40) - oracle::brute_force_knn(s, 40)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Knn, RandomSetsMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const int m = 1 + static_cast<int>(seed % 8);
    const int k = 5 + static_cast<int>((seed * 7) % 56);
    const auto s = random_periodic_set(seed, m, 0.25);
    EXPECT_LE((knn_distances(s, k) - oracle::brute_force_knn(s, k)).cwiseAbs().maxCoeff(), 1e-12) << "seed " << seed;
  }
}

TEST(Knn, RowsAscendingAndPositive) {
  const auto d = knn_distances(random_periodic_set(3, 6, 0.4), 30);
  EXPECT_GT(d.minCoeff(), 0.0);
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 1; j < d.cols(); ++j) EXPECT_LE(d(i, j - 1), d(i, j));
}

TEST(Knn, RejectsNonPositiveK) { EXPECT_THROW(knn_distances(unit_cube(), 0), Error); }

TEST(Collapse, LuSiWorkedExample) {
  RowMatrix rows(4, 2);
  rows << 2.881, 2.881, 2.481, 2.481, 2.881, 2.881, 2.481, 2.481;
  const auto p = collapse_rows(rows, {0.25, 0.25, 0.25, 0.25}, nullptr, 0.0, false);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p.weights[0], 0.5, 1e-12);
  EXPECT_NEAR(p.weights[1], 0.5, 1e-12);
  EXPECT_NEAR(p.rows(0, 0), 2.481, 1e-12);
  EXPECT_NEAR(p.rows(0, 1), 2.481, 1e-12);
  EXPECT_NEAR(p.rows(1, 0), 2.881, 1e-12);
  EXPECT_NEAR(p.rows(1, 1), 2.881, 1e-12);
  EXPECT_FALSE(p.species.has_value());

  const auto a = amd(p);
  EXPECT_NEAR(a.values[0], 2.681, 1e-12);
  EXPECT_NEAR(a.values[1], 2.681, 1e-12);
}

TEST(Collapse, GroupRowIsWeightedMean) {
  RowMatrix rows(2, 1);
  rows << 1.0, 1.0 + 3e-5;
  const auto p = collapse_rows(rows, {0.75, 0.25}, nullptr, 1e-4, false);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_NEAR(p.rows(0, 0), 1.0 + 0.25 * 3e-5, 1e-15);
  EXPECT_DOUBLE_EQ(p.weights[0], 1.0);
}

TEST(Collapse, SingleLinkageChains) {
  RowMatrix rows(3, 1);
  rows << 1.0, 1.0 + 0.8e-4, 1.0 + 1.6e-4;  // ends are 1.6e-4 apart, neighbours 0.8e-4
  EXPECT_EQ(collapse_rows(rows, {1.0 / 3, 1.0 / 3, 1.0 / 3}, nullptr, 1e-4, false).size(), 1u);
}

TEST(Collapse, OrderIndependent) {
  Rng rng(5);
  RowMatrix rows(12, 3);
  for (Eigen::Index i = 0; i < 12; ++i) {
    const double base = 1.0 + static_cast<double>(i % 4);
    for (Eigen::Index j = 0; j < 3; ++j) rows(i, j) = base + j + rng.uniform(0, 5e-5);
  }
  const std::vector<double> w(12, 1.0 / 12);
  const auto ref = collapse_rows(rows, w, nullptr, 1e-4, false);
  EXPECT_EQ(ref.size(), 4u);
  std::vector<Eigen::Index> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  RowMatrix shuffled(12, 3);
  for (Eigen::Index i = 0; i < 12; ++i) shuffled.row(i) = rows.row(perm[static_cast<std::size_t>(i)]);
  expect_pdd_near(collapse_rows(shuffled, w, nullptr, 1e-4, false), ref, 1e-14);
}

TEST(Pdd, GeneralPositionKeepsEveryRow) {
  const auto s = random_periodic_set(77, 6, 0.4);
  const auto p = pdd(s, 12, 0.0);
  EXPECT_EQ(p.size(), 6u);
  for (double w : p.weights) EXPECT_DOUBLE_EQ(w, 1.0 / 6);
}

TEST(Pdd, SpeciesAwareKeepsDistinctElementsApart) {
  const auto s = cesium_chloride();
  const auto aware = pdd(s, 14, 0.0, true);
  ASSERT_EQ(aware.size(), 2u);
  ASSERT_TRUE(aware.species.has_value());
  EXPECT_EQ(*aware.species, (std::vector<int>{17, 55}));
  EXPECT_EQ(aware.rows.row(0), aware.rows.row(1));

  const auto agnostic = pdd(s, 14, 0.0, false);
  ASSERT_EQ(agnostic.size(), 1u);
  EXPECT_DOUBLE_EQ(agnostic.weights[0], 1.0);
  EXPECT_FALSE(agnostic.species.has_value());
  // Oracle: both sites see 8 neighbours at a*sqrt(3)/2, then 6 at a.
  const auto d = oracle::brute_force_knn(s, 14);
  EXPECT_LE((agnostic.rows.row(0) - d.row(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(d(0, 0), 2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(d(0, 13), 4.0, 1e-12);
}

TEST(Pdd, Invariants) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_periodic_set(seed, 1 + static_cast<int>(seed % 7), 0.5);
    const auto p = pdd(s, 20);
    double total = 0.0;
    for (double w : p.weights) {
      EXPECT_GT(w, 0.0);
      EXPECT_LE(w, 1.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_LE(p.size(), s.size());
    EXPECT_GT(p.rows.minCoeff(), 0.0);
    for (Eigen::Index i = 0; i < p.rows.rows(); ++i)
      for (Eigen::Index j = 1; j < p.k; ++j) EXPECT_LE(p.rows(i, j - 1), p.rows(i, j));
    for (Eigen::Index i = 1; i < p.rows.rows(); ++i) {
      // First entry that differs beyond the tie epsilon must increase.
      for (Eigen::Index j = 0; j < p.k; ++j) {
        const double x = p.rows(i - 1, j), y = p.rows(i, j);
        if (std::abs(x - y) > kRowTieEpsilon) {
          EXPECT_LT(x, y) << "rows " << i - 1 << "," << i;
          break;
        }
      }
    }
  }
}

TEST(Pdd, IsometryInvariance) {
  Rng rng(31);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = random_periodic_set(seed + 1000, 1 + static_cast<int>(seed % 8), 0.5);
    const auto t = apply_isometry(s, random_isometry(rng));
    expect_pdd_near(pdd(t, 15), pdd(s, 15), 1e-9);
  }
}

TEST(Pdd, UnitCellInvariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = random_periodic_set(seed + 2000, 1 + static_cast<int>(seed % 4), 0.4);
    const int nx = 1 + static_cast<int>(seed % 3), ny = 1 + static_cast<int>((seed / 3) % 3), nz = 1 + static_cast<int>((seed / 2) % 3);
    const auto big = supercell(s, nx, ny, nz);
    expect_pdd_near(pdd(big, 15, 0.0), pdd(s, 15, 0.0), 1e-9);
    const auto a = amd(pdd(big, 15, 0.0)), b = amd(pdd(s, 15, 0.0));
    for (int j = 0; j < 15; ++j) EXPECT_NEAR(a.values[static_cast<std::size_t>(j)], b.values[static_cast<std::size_t>(j)], 1e-9);
  }
}

TEST(Pdd, MonotoneInTolerance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = random_periodic_set(seed + 3000, 8, 0.5);
    std::size_t prev = s.size() + 1;
    for (double tol : {0.0, 1e-4, 1e-2, 1.0}) {
      const std::size_t r = pdd(s, 10, tol).size();
      EXPECT_LE(r, prev);
      prev = r;
    }
  }
}

TEST(Amd, SingleRowAndAscending) {
  const auto p = pdd(unit_cube(), 18);
  const auto a = amd(p);
  for (int j = 0; j < 18; ++j) EXPECT_DOUBLE_EQ(a.values[static_cast<std::size_t>(j)], p.rows(0, j));
  const auto b = amd(pdd(random_periodic_set(4, 5, 0.3), 25));
  for (std::size_t j = 1; j < b.values.size(); ++j) EXPECT_LE(b.values[j - 1], b.values[j]);
}

TEST(GenericK, UnitCube) {
  EXPECT_FALSE(generic_k_upper_bound(unit_cube(), 6));
  // Shells at 1, sqrt2, sqrt3 hold 6 + 12 + 8 points; the 27th neighbour is at 2.
  const auto d = oracle::brute_force_knn(unit_cube(), 27);
  EXPECT_NEAR(d(0, 25), std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(d(0, 26), 2.0, 1e-12);
  EXPECT_FALSE(generic_k_upper_bound(unit_cube(), 26));
  EXPECT_TRUE(generic_k_upper_bound(unit_cube(), 27));
}

TEST(GenericK, MonotoneInK) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = random_periodic_set(seed, 3, 0.3);
    bool seen = false;
    for (int k = 1; k <= 150; k += 3) {
      const bool now = generic_k_upper_bound(s, k);
      if (seen) EXPECT_TRUE(now);
      seen = seen || now;
    }
    EXPECT_TRUE(seen);
  }
}

TEST(StableK, TrivialCases) {
  EXPECT_EQ(stable_k(unit_cube(), 15), 1);
  EXPECT_EQ(stable_k(random_periodic_set(1, 4, 0.3), 1), 1);
}

TEST(StableK, SupercellReplicasGroupedAtReturnedK) {
  const auto s = random_periodic_set(12, 3, 0.4);
  const auto big = supercell(s, 2, 1, 1);
  const int k_max = 30;
  const int k = stable_k(big, k_max, 0.0);
  EXPECT_GE(k, 1);
  EXPECT_LE(k, k_max);
  const auto at_k = pdd(big, k, 0.0);
  const auto at_max = pdd(big, k_max, 0.0);
  EXPECT_EQ(at_k.size(), at_max.size());
  EXPECT_EQ(at_k.size(), s.size());
  // Same grouping means the k-prefix of the k_max PDD matches the PDD at k.
  EXPECT_LE((at_max.rows.leftCols(k) - at_k.rows).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(at_k.weights.size(), at_max.weights.size());
}

}  // namespace
}  // namespace pddkit
