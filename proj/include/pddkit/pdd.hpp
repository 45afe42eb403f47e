#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "pddkit/error.hpp"
#include "pddkit/geometry.hpp"

namespace pddkit {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDefaultK = 15;
inline constexpr double kDefaultCollapseTolerance = 1e-4;

/// Rows closer than this (L-infinity) are always merged, even at tolerance 0.
/// Round-off in the neighbour search is ~1e-14 angstrom, far below it.
inline constexpr double kRowMergeFloor = 1e-10;

/// Distance entries closer than this are treated as ties when ordering rows.
inline constexpr double kRowTieEpsilon = 1e-10;

/// Weighted, lexicographically ordered distance matrix.
struct Pdd {
  std::vector<double> weights;
  RowMatrix rows;                          // r x k
  std::optional<std::vector<int>> species;  // present iff species-aware collapse was used
  int k = 0;
  double tolerance = 0.0;
  std::string source_id;

  std::size_t size() const { return weights.size(); }
};

struct Amd {
  std::vector<double> values;
  int k = 0;
};

/// Row i holds the k smallest distances from motif point i to every other point
/// of the infinite periodic set, ascending.
///
/// Lattice translates are visited in shells of constant infinity-norm s of the
/// integer cell index. A point in shell s+1 or beyond lies more than
/// s * (smallest plane spacing) away from any point of the home cell, so the
/// search stops once every row's k-th distance is within that radius.
inline RowMatrix knn_distances(const PeriodicSet& set, int k) {
  if (k < 1) throw Error(ErrorKind::InvalidInput, "k must be >= 1");
  const std::size_t m = set.size();
  const auto ku = static_cast<std::size_t>(k);
  std::vector<Vec3> cart(m);
  for (std::size_t j = 0; j < m; ++j) cart[j] = set.cartesian(j);
  const double spacing = set.basis.plane_spacings().minCoeff();

  std::vector<std::priority_queue<double>> best(m);
  auto visit = [&](const Vec3& shift, bool home) {
    for (std::size_t i = 0; i < m; ++i) {
      auto& heap = best[i];
      for (std::size_t j = 0; j < m; ++j) {
        if (home && i == j) continue;
        const double d = (cart[j] + shift - cart[i]).norm();
        if (heap.size() < ku) {
          heap.push(d);
        } else if (d < heap.top()) {
          heap.pop();
          heap.push(d);
        }
      }
    }
  };

  for (int s = 0;; ++s) {
    for (int a = -s; a <= s; ++a) {
      for (int b = -s; b <= s; ++b) {
        for (int c = -s; c <= s; ++c) {
          if (std::max({std::abs(a), std::abs(b), std::abs(c)}) != s) continue;
          visit(set.basis.to_cartesian(Vec3(a, b, c)), s == 0);
        }
      }
    }
    const double radius = s * spacing;
    const bool done = std::all_of(best.begin(), best.end(),
                                  [&](const auto& heap) { return heap.size() == ku && heap.top() <= radius; });
    if (done) break;
  }

  RowMatrix out(static_cast<Eigen::Index>(m), k);
  for (std::size_t i = 0; i < m; ++i) {
    for (int j = k - 1; j >= 0; --j) {
      out(static_cast<Eigen::Index>(i), j) = best[i].top();
      best[i].pop();
    }
  }
  return out;
}

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // The smaller index becomes the root, so roots are group minima.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

inline double linf_rows(const RowMatrix& rows, Eigen::Index i, Eigen::Index j, Eigen::Index cols) {
  return (rows.row(i).head(cols) - rows.row(j).head(cols)).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Single-linkage grouping of rows (first `cols` columns) whose L-infinity
/// distance is <= max(tolerance, kRowMergeFloor), optionally only between equal
/// species. Returns, for each row, the smallest row index in its group.
inline std::vector<std::size_t> collapse_partition(const RowMatrix& rows, const std::vector<int>* species,
                                                   double tolerance, Eigen::Index cols = -1) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (cols < 0) cols = rows.cols();
  const double tol = std::max(tolerance, kRowMergeFloor);
  detail::DisjointSets sets(n);
  if (cols == 0) {
    for (std::size_t i = 1; i < n; ++i)
      if (!species || (*species)[i] == (*species)[0]) sets.unite(0, i);
  }
  // Pairs within tol in L-infinity are within tol in the first column, so a
  // sweep over rows sorted by that column finds every linked pair.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cols > 0) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rows(static_cast<Eigen::Index>(a), 0) < rows(static_cast<Eigen::Index>(b), 0);
    });
    for (std::size_t x = 0; x < n; ++x) {
      const auto i = static_cast<Eigen::Index>(order[x]);
      for (std::size_t y = x + 1; y < n; ++y) {
        const auto j = static_cast<Eigen::Index>(order[y]);
        if (rows(j, 0) - rows(i, 0) > tol) break;
        if (species && (*species)[order[x]] != (*species)[order[y]]) continue;
        if (detail::linf_rows(rows, i, j, cols) <= tol) sets.unite(order[x], order[y]);
      }
    }
  }
  std::vector<std::size_t> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = sets.find(i);
  return label;
}

/// Collapses a weighted row set: each group becomes one row, the weight-weighted
/// mean of its members, carrying the summed weight. Rows are then ordered
/// lexicographically (ties within kRowTieEpsilon broken by species, then by the
/// smallest member index).
inline Pdd collapse_rows(const RowMatrix& rows, const std::vector<double>& weights,
                         const std::vector<int>* species, double tolerance, bool species_aware) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (weights.size() != n) throw Error(ErrorKind::LengthMismatch, "one weight per row required");
  if (species && species->size() != n) throw Error(ErrorKind::LengthMismatch, "one species per row required");
  if (species_aware && !species) throw Error(ErrorKind::InvalidInput, "species-aware collapse needs species");
  const auto label = collapse_partition(rows, species_aware ? species : nullptr, tolerance);

  std::vector<std::size_t> groups;  // group representatives (minimum index), ascending
  for (std::size_t i = 0; i < n; ++i)
    if (label[i] == i) groups.push_back(i);

  const Eigen::Index k = rows.cols();
  std::vector<double> gw(groups.size(), 0.0);
  RowMatrix grows = RowMatrix::Zero(static_cast<Eigen::Index>(groups.size()), k);
  std::vector<std::size_t> slot(n);
  for (std::size_t g = 0; g < groups.size(); ++g) slot[groups[g]] = g;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t g = slot[label[i]];
    gw[g] += weights[i];
    grows.row(static_cast<Eigen::Index>(g)) += weights[i] * rows.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t g = 0; g < groups.size(); ++g) grows.row(static_cast<Eigen::Index>(g)) /= gw[g];

  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double x = grows(static_cast<Eigen::Index>(a), j), y = grows(static_cast<Eigen::Index>(b), j);
      if (std::abs(x - y) > kRowTieEpsilon) return x < y;
    }
    if (species_aware) {
      const int sa = (*species)[groups[a]], sb = (*species)[groups[b]];
      if (sa != sb) return sa < sb;
    }
    return groups[a] < groups[b];
  });

  Pdd out;
  out.k = static_cast<int>(k);
  out.tolerance = tolerance;
  out.rows.resize(static_cast<Eigen::Index>(groups.size()), k);
  if (species_aware) out.species.emplace();
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.weights.push_back(gw[order[r]]);
    out.rows.row(static_cast<Eigen::Index>(r)) = grows.row(static_cast<Eigen::Index>(order[r]));
    if (species_aware) out.species->push_back((*species)[groups[order[r]]]);
  }
  return out;
}

/// Pointwise Distance Distribution of a periodic set.
inline Pdd pdd(const PeriodicSet& set, int k, double tolerance = kDefaultCollapseTolerance,
               bool species_aware = true) {
  if (!(tolerance >= 0.0)) throw Error(ErrorKind::InvalidInput, "tolerance must be >= 0");
  const RowMatrix dists = knn_distances(set, k);
  const std::vector<double> weights(set.size(), 1.0 / static_cast<double>(set.size()));
  Pdd out = collapse_rows(dists, weights, &set.motif.species(), tolerance, species_aware);
  out.source_id = set.id;
  return out;
}

/// Average Minimum Distance: weighted column means of the PDD.
inline Amd amd(const Pdd& p) {
  Amd out;
  out.k = p.k;
  out.values.assign(static_cast<std::size_t>(p.k), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (int j = 0; j < p.k; ++j) out.values[static_cast<std::size_t>(j)] += p.weights[i] * p.rows(static_cast<Eigen::Index>(i), j);
  return out;
}

/// True when every point's k-th neighbour is farther than twice the covering
/// radius bound, which certifies the generic-completeness regime for this k.
inline bool generic_k_upper_bound(const PeriodicSet& set, int k) {
  const RowMatrix d = knn_distances(set, k);
  return d.col(k - 1).minCoeff() > 2.0 * covering_radius_upper_bound(set.basis);
}

/// Smallest k <= k_max whose collapse partition of the motif equals the one at k_max.
inline int stable_k(const PeriodicSet& set, int k_max, double tolerance = kDefaultCollapseTolerance,
                    bool species_aware = true) {
  if (k_max < 1) throw Error(ErrorKind::InvalidInput, "k_max must be >= 1");
  const RowMatrix d = knn_distances(set, k_max);
  const std::vector<int>* species = species_aware ? &set.motif.species() : nullptr;
  const auto target = collapse_partition(d, species, tolerance);
  for (int k = 1; k < k_max; ++k) {
    if (collapse_partition(d, species, tolerance, k) == target) return k;
  }
  return k_max;
}

}  // namespace pddkit
