#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pddkit/geometry.hpp"
#include "pddkit/pdd.hpp"

namespace pddkit {
namespace {

TEST(CellParams, CubicIsDiagonal) {
  const auto basis = cell_params_to_basis(4, 4, 4, 90, 90, 90);
  EXPECT_TRUE(basis.matrix().isApprox(4.0 * Mat3::Identity(), 0.0));
}

TEST(CellParams, RhombohedralVolumeMatchesClosedForm) {
  const double a = 3.0, ca = std::cos(60.0 * std::numbers::pi / 180.0);
  const double expected = a * a * a * std::sqrt(1 - 3 * ca * ca + 2 * ca * ca * ca);
  EXPECT_NEAR(cell_params_to_basis(3, 3, 3, 60, 60, 60).volume(), expected, 1e-12);
}

TEST(CellParams, OrientationConvention) {
  const auto m = cell_params_to_basis(3.1, 4.2, 5.3, 71, 83, 101).matrix();
  EXPECT_GT(m(0, 0), 0);
  EXPECT_EQ(m(0, 1), 0);
  EXPECT_EQ(m(0, 2), 0);
  EXPECT_GT(m(1, 1), 0);
  EXPECT_EQ(m(1, 2), 0);
  EXPECT_GT(m(2, 2), 0);
}

TEST(CellParams, RoundTripRandom) {
  Rng rng(11);
  int checked = 0;
  while (checked < 1000) {
    CellParameters p{rng.uniform(1, 20), rng.uniform(1, 20), rng.uniform(1, 20),
                     rng.uniform(30, 150), rng.uniform(30, 150), rng.uniform(30, 150)};
    LatticeBasis basis;
    try {
      basis = cell_params_to_basis(p);
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::DegenerateCell);
      continue;
    }
    const auto q = cell_parameters(basis);
    EXPECT_NEAR(q.a / p.a, 1.0, 1e-10);
    EXPECT_NEAR(q.b / p.b, 1.0, 1e-10);
    EXPECT_NEAR(q.c / p.c, 1.0, 1e-10);
    EXPECT_NEAR(q.alpha / p.alpha, 1.0, 1e-10);
    EXPECT_NEAR(q.beta / p.beta, 1.0, 1e-10);
    EXPECT_NEAR(q.gamma / p.gamma, 1.0, 1e-10);
    ++checked;
  }
}

TEST(CellParams, DegenerateCellsRejected) {
  EXPECT_THROW(cell_params_to_basis(1, 1, 1, 120, 120, 120), Error);  // coplanar
  EXPECT_THROW(cell_params_to_basis(0, 1, 1, 90, 90, 90), Error);
  EXPECT_THROW(cell_params_to_basis(1, 1, 1, 0, 90, 90), Error);
  EXPECT_THROW(cell_params_to_basis(1, 1, std::nan(""), 90, 90, 90), Error);
}

TEST(LatticeBasis, RejectsLeftHanded) {
  Mat3 m = Mat3::Identity();
  m(2, 2) = -1;
  try {
    LatticeBasis b(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateCell);
  }
}

TEST(Motif, WrapsIntoUnitCell) {
  Motif m({Vec3(1.25, -0.25, 1.0 - 1e-13)}, {6});
  EXPECT_DOUBLE_EQ(m.positions()[0].x(), 0.25);
  EXPECT_DOUBLE_EQ(m.positions()[0].y(), 0.75);
  EXPECT_EQ(m.positions()[0].z(), 0.0);
}

TEST(Motif, Invariants) {
  EXPECT_THROW(Motif({}, {}), Error);
  EXPECT_THROW(Motif({Vec3::Zero()}, {}), Error);
  EXPECT_THROW(Motif({Vec3::Zero()}, {119}), Error);
}

TEST(Isometry, IdentityAndLatticeTranslation) {
  const auto s = random_periodic_set(5, 4, 0.4);
  const auto same = apply_isometry(s, Isometry{});
  for (std::size_t j = 0; j < s.size(); ++j) {
    EXPECT_LT((same.motif.positions()[j] - s.motif.positions()[j]).norm(), 1e-12);
  }
  const auto shifted = apply_isometry(s, Isometry{Mat3::Identity(), s.basis.vector(0)});
  for (std::size_t j = 0; j < s.size(); ++j) {
    Vec3 d = shifted.motif.positions()[j] - s.motif.positions()[j];
    for (int c = 0; c < 3; ++c) d[c] -= std::round(d[c]);
    EXPECT_LT(d.norm(), 1e-12);
    EXPECT_EQ(shifted.motif.species()[j], s.motif.species()[j]);
  }
  EXPECT_TRUE(shifted.basis.matrix().isApprox(s.basis.matrix()));
}

TEST(Isometry, RejectsNonOrthogonal) {
  Mat3 m = Mat3::Identity();
  m(0, 1) = 1e-6;
  EXPECT_THROW(Isometry::make(m, Vec3::Zero()), Error);
}

TEST(Isometry, PreservesNeighbourDistances) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_periodic_set(100 + trial, 1 + trial % 5, 0.5);
    const auto t = apply_isometry(s, random_isometry(rng));
    const auto ds = oracle::brute_force_knn(s, 10);
    const auto dt = oracle::brute_force_knn(t, 10);
    // Row order follows motif order, which the isometry keeps.
    EXPECT_LT((ds - dt).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Supercell, IdentityMultiple) {
  const auto s = random_periodic_set(8, 3, 0.3);
  const auto t = supercell(s, 1, 1, 1);
  EXPECT_TRUE(t.basis.matrix().isApprox(s.basis.matrix()));
  ASSERT_EQ(t.size(), s.size());
  for (std::size_t j = 0; j < s.size(); ++j) EXPECT_EQ(t.motif.positions()[j], s.motif.positions()[j]);
}

TEST(Supercell, SizeAndDensity) {
  const auto s = random_periodic_set(9, 3, 0.3);
  for (int n = 1; n <= 3; ++n) {
    const auto t = supercell(s, n, n, n);
    EXPECT_EQ(t.size(), static_cast<std::size_t>(n * n * n) * s.size());
    EXPECT_NEAR(t.density(), s.density(), 1e-12);
  }
}

TEST(Supercell, Overflow) {
  const auto s = random_periodic_set(1, 4);
  try {
    supercell(s, 10, 10, 10, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Overflow);
  }
  EXPECT_THROW(supercell(s, 0, 1, 1), Error);
}

TEST(RandomSet, Deterministic) {
  const auto a = random_periodic_set(42, 6, 0.5);
  const auto b = random_periodic_set(42, 6, 0.5);
  EXPECT_EQ(a.basis.matrix(), b.basis.matrix());
  EXPECT_EQ(a.motif.species(), b.motif.species());
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a.motif.positions()[j], b.motif.positions()[j]);
}

TEST(RandomSet, UnitCubeSingleAtom) {
  const auto s = random_periodic_set(7, 1, 0.0);
  EXPECT_EQ(s.basis.matrix(), Mat3::Identity());
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.motif.positions()[0], Vec3::Zero());
}

TEST(RandomSet, SeparationAndPalette) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto s = random_periodic_set(seed, 8, 0.6);
    const auto d = oracle::brute_force_knn(s, 1, 2);
    EXPECT_GE(d.minCoeff(), kRandomMinSeparation - 1e-12);
    for (int z : s.motif.species()) {
      EXPECT_NE(std::find(kRandomSpeciesPalette.begin(), kRandomSpeciesPalette.end(), z), kRandomSpeciesPalette.end());
    }
  }
}

TEST(Perturb, ZeroAndBoundedDisplacement) {
  const auto s = random_periodic_set(2, 5, 0.3);
  const auto same = perturb_motif(s, 0.0, 1);
  for (std::size_t j = 0; j < s.size(); ++j) EXPECT_EQ(same.motif.positions()[j], s.motif.positions()[j]);

  const auto p = perturb_motif(s, 0.01, 99);
  EXPECT_EQ(p.basis.matrix(), s.basis.matrix());
  for (std::size_t j = 0; j < s.size(); ++j) {
    Vec3 df = p.motif.positions()[j] - s.motif.positions()[j];
    for (int c = 0; c < 3; ++c) df[c] -= std::round(df[c]);
    EXPECT_LE(s.basis.to_cartesian(df).norm(), 0.01 + 1e-12);
  }
  const auto again = perturb_motif(s, 0.01, 99);
  for (std::size_t j = 0; j < s.size(); ++j) EXPECT_EQ(again.motif.positions()[j], p.motif.positions()[j]);
}

TEST(CoveringRadius, UnitCubeAndScaling) {
  EXPECT_NEAR(covering_radius_upper_bound(LatticeBasis()), std::sqrt(3.0) / 2.0, 1e-15);
  EXPECT_NEAR(covering_radius_upper_bound(LatticeBasis::cubic(2.0)), std::sqrt(3.0), 1e-15);
}

TEST(CoveringRadius, BoundsMonteCarloEstimate) {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto basis = random_periodic_set(500 + trial, 1, 0.9).basis;
    double worst = 0.0;
    for (int s = 0; s < 1000; ++s) {
      const Vec3 x = basis.to_cartesian(Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
      double nearest = std::numeric_limits<double>::infinity();
      for (int a = -2; a <= 2; ++a)
        for (int b = -2; b <= 2; ++b)
          for (int c = -2; c <= 2; ++c) nearest = std::min(nearest, (x - basis.to_cartesian(Vec3(a, b, c))).norm());
      worst = std::max(worst, nearest);
    }
    EXPECT_GE(covering_radius_upper_bound(basis), worst);
  }
}

}  // namespace
}  // namespace pddkit
