#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "pddkit/error.hpp"
#include "pddkit/parallel.hpp"
#include "pddkit/pdd.hpp"

namespace pddkit {

enum class GroundMetric { Chebyshev, Manhattan, Euclidean };

inline double ground_distance(std::span<const double> a, std::span<const double> b,
                              GroundMetric metric = GroundMetric::Chebyshev) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "rows differ in length");
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = std::abs(a[j] - b[j]);
    switch (metric) {
      case GroundMetric::Chebyshev: acc = std::max(acc, d); break;
      case GroundMetric::Manhattan: acc += d; break;
      case GroundMetric::Euclidean: acc += d * d; break;
    }
  }
  return metric == GroundMetric::Euclidean ? std::sqrt(acc) : acc;
}

struct Flow {
  std::size_t source;
  std::size_t target;
  double mass;
};

struct TransportPlan {
  std::vector<Flow> flows;
  double cost = 0.0;
};

/// Masses below this are treated as zero by the flow solver.
inline constexpr double kMassEpsilon = 1e-12;

/// Exact balanced transportation problem solved by successive shortest paths
/// (Dijkstra with node potentials) on the bipartite residual graph.
inline TransportPlan solve_transport(const std::vector<double>& supply, const std::vector<double>& demand,
                                     const RowMatrix& cost) {
  const std::size_t r = supply.size(), q = demand.size();
  if (static_cast<std::size_t>(cost.rows()) != r || static_cast<std::size_t>(cost.cols()) != q) {
    throw Error(ErrorKind::ShapeMismatch, "cost matrix does not match marginals");
  }
  const double total_s = std::accumulate(supply.begin(), supply.end(), 0.0);
  const double total_d = std::accumulate(demand.begin(), demand.end(), 0.0);
  if (std::abs(total_s - total_d) > 1e-9) {
    throw Error(ErrorKind::Unbalanced, "marginals sum to " + std::to_string(total_s) + " and " + std::to_string(total_d));
  }

  // Nodes: 0 = super source, 1..r sources, r+1..r+q sinks, r+q+1 = super sink.
  const std::size_t n = r + q + 2, S = 0, T = r + q + 1;
  auto src = [](std::size_t i) { return 1 + i; };
  auto snk = [r](std::size_t j) { return 1 + r + j; };
  constexpr double inf = std::numeric_limits<double>::infinity();

  std::vector<double> supply_left = supply, demand_left = demand;
  RowMatrix flow = RowMatrix::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q));
  std::vector<double> potential(n, 0.0), dist(n);
  std::vector<std::size_t> prev(n);
  std::vector<char> done(n);

  auto remaining = [](const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return x > kMassEpsilon; });
  };

  while (remaining(supply_left) && remaining(demand_left)) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(done.begin(), done.end(), 0);
    dist[S] = 0.0;
    auto relax = [&](std::size_t u, std::size_t v, double c) {
      const double reduced = std::max(0.0, c + potential[u] - potential[v]);
      if (dist[u] + reduced < dist[v]) {
        dist[v] = dist[u] + reduced;
        prev[v] = u;
      }
    };
    for (;;) {
      std::size_t u = n;
      for (std::size_t v = 0; v < n; ++v)
        if (!done[v] && dist[v] < inf && (u == n || dist[v] < dist[u])) u = v;
      if (u == n || u == T) break;
      done[u] = 1;
      if (u == S) {
        for (std::size_t i = 0; i < r; ++i)
          if (supply_left[i] > kMassEpsilon) relax(S, src(i), 0.0);
      } else if (u <= r) {
        const std::size_t i = u - 1;
        for (std::size_t j = 0; j < q; ++j) relax(u, snk(j), cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      } else {
        const std::size_t j = u - 1 - r;
        for (std::size_t i = 0; i < r; ++i) {
          if (flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > kMassEpsilon) {
            relax(u, src(i), -cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
          }
        }
        if (demand_left[j] > kMassEpsilon) relax(u, T, 0.0);
      }
    }
    if (!(dist[T] < inf)) throw Error(ErrorKind::InvalidInput, "transport solver found no augmenting path");
    for (std::size_t v = 0; v < n; ++v) potential[v] += std::min(dist[v], dist[T]);

    // Bottleneck along the path T <- ... <- S.
    double push = inf;
    for (std::size_t v = T; v != S; v = prev[v]) {
      const std::size_t u = prev[v];
      if (u == S) {
        push = std::min(push, supply_left[v - 1]);
      } else if (v == T) {
        push = std::min(push, demand_left[u - 1 - r]);
      } else if (u > r) {  // reverse arc sink -> source cancels flow
        push = std::min(push, flow(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - 1 - r)));
      }
    }
    for (std::size_t v = T; v != S; v = prev[v]) {
      const std::size_t u = prev[v];
      if (u == S) {
        supply_left[v - 1] -= push;
      } else if (v == T) {
        demand_left[u - 1 - r] -= push;
      } else if (u <= r) {
        flow(static_cast<Eigen::Index>(u - 1), static_cast<Eigen::Index>(v - 1 - r)) += push;
      } else {
        flow(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - 1 - r)) -= push;
      }
    }
  }

  TransportPlan plan;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      const double mass = flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (mass > kMassEpsilon) {
        plan.flows.push_back({i, j, mass});
        plan.cost += mass * cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  return plan;
}

inline RowMatrix ground_cost_matrix(const Pdd& p, const Pdd& q, GroundMetric metric = GroundMetric::Chebyshev) {
  RowMatrix cost(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(q.size()));
  const auto k = static_cast<std::size_t>(p.k);
  for (Eigen::Index i = 0; i < cost.rows(); ++i)
    for (Eigen::Index j = 0; j < cost.cols(); ++j)
      cost(i, j) = ground_distance({p.rows.row(i).data(), k}, {q.rows.row(j).data(), k}, metric);
  return cost;
}

struct EmdResult {
  double cost = 0.0;
  TransportPlan plan;
};

namespace detail {

// Total order on PDDs used to pick a solve direction, so emd(p, q) and
// emd(q, p) run the identical computation.
inline bool canonical_before(const Pdd& p, const Pdd& q) {
  if (p.size() != q.size()) return p.size() < q.size();
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p.weights[i] != q.weights[i]) return p.weights[i] < q.weights[i];
  const auto n = p.rows.size();
  for (Eigen::Index t = 0; t < n; ++t)
    if (p.rows.data()[t] != q.rows.data()[t]) return p.rows.data()[t] < q.rows.data()[t];
  return false;
}

}  // namespace detail

/// Earth Mover's Distance between two PDDs; species columns are ignored.
inline EmdResult emd(const Pdd& p, const Pdd& q, GroundMetric metric = GroundMetric::Chebyshev) {
  if (p.k != q.k) {
    throw Error(ErrorKind::KMismatch, "k differs: " + std::to_string(p.k) + " vs " + std::to_string(q.k));
  }
  if (detail::canonical_before(q, p)) {
    TransportPlan plan = solve_transport(q.weights, p.weights, ground_cost_matrix(q, p, metric));
    for (auto& f : plan.flows) std::swap(f.source, f.target);
    std::sort(plan.flows.begin(), plan.flows.end(),
              [](const Flow& a, const Flow& b) { return a.source != b.source ? a.source < b.source : a.target < b.target; });
    const double c = plan.cost;
    return {c, std::move(plan)};
  }
  TransportPlan plan = solve_transport(p.weights, q.weights, ground_cost_matrix(p, q, metric));
  const double c = plan.cost;
  return {c, std::move(plan)};
}

/// Symmetric matrix of pairwise EMD costs, computed in parallel over the upper triangle.
inline RowMatrix distance_matrix(const std::vector<Pdd>& pdds, GroundMetric metric = GroundMetric::Chebyshev) {
  const std::size_t n = pdds.size();
  for (const auto& p : pdds) {
    if (p.k != pdds.front().k) {
      throw Error(ErrorKind::KMismatch, "k differs: " + std::to_string(pdds.front().k) + " vs " + std::to_string(p.k));
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  RowMatrix out = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> values(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t t) { values[t] = emd(pdds[pairs[t].first], pdds[pairs[t].second], metric).cost; });
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(pairs[t].first), j = static_cast<Eigen::Index>(pairs[t].second);
    out(i, j) = out(j, i) = values[t];
  }
  return out;
}

}  // namespace pddkit
