#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "sinkscale/matrix.hpp"
#include "sinkscale/sk.hpp"

namespace sinkscale {

struct DensityReport {
  double rho = 0.0;
  double gamma = 0.0;
  double gamma_prime = 0.0;
  double max_entry = 0.0;  // the reference entry t
  bool is_dense = false;   // gamma + gamma_prime > 1
};

// (gamma, gamma', rho)-density with respect to (u, v): gamma is the smallest
// v-weighted fraction of "active" entries over rows, gamma' the u-weighted
// analog over columns. The comparison is the definition's strict A_ij > rho*t
// with a -1e-12 relative slack on the threshold, so entries lying exactly on
// rho*t (the paper's block constructions at rho = 1) land on the active side.
inline DensityReport density(const Matrix& m, const Marginals& targets, double rho) {
  if (!(rho > 0.0) || rho > 1.0) throw InvalidInputError("density: rho must lie in (0, 1]");
  if (m.rows() != targets.u.size() || m.cols() != targets.v.size())
    throw InvalidInputError("density: dimension mismatch");
  const double t = max_entry(m);
  if (!(t > 0.0)) throw InvalidInputError("density: matrix has no positive entry");
  const double threshold = rho * t * (1.0 - 1e-12);
  double su = 0.0, sv = 0.0;
  for (double x : targets.u) su += x;
  for (double x : targets.v) sv += x;

  DensityReport rep;
  rep.rho = rho;
  rep.max_entry = t;
  double gamma = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double w = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(i, j) > threshold) w += targets.v[j];
    gamma = std::min(gamma, w / sv);
  }
  double gamma_prime = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double w = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
      if (m(i, j) > threshold) w += targets.u[i];
    gamma_prime = std::min(gamma_prime, w / su);
  }
  rep.gamma = gamma;
  rep.gamma_prime = gamma_prime;
  rep.is_dense = gamma + gamma_prime > 1.0;
  return rep;
}

// Scans the distinct normalized entry values A_ij / t, each shifted below by
// 1e-12, and returns the report maximizing gamma + gamma'; ties break toward
// the larger rho (larger rho improves the downstream complexity constants).
inline DensityReport best_rho(const Matrix& m, const Marginals& targets) {
  const double t = max_entry(m);
  if (!(t > 0.0)) throw InvalidInputError("best_rho: matrix has no positive entry");
  std::vector<double> candidates;
  for (double x : m.data())
    if (x > 0.0) candidates.push_back(std::min(1.0, std::max(x / t - 1e-12, 1e-15)));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  DensityReport best;
  bool have = false;
  for (double rho : candidates) {
    DensityReport rep = density(m, targets, rho);
    const double score = rep.gamma + rep.gamma_prime;
    if (!have || score > best.gamma + best.gamma_prime ||
        (score == best.gamma + best.gamma_prime && rho > best.rho)) {
      best = rep;
      have = true;
    }
  }
  return best;
}

struct WellBoundednessReport {
  double rho = 0.0;
  double r_rho = 0.0;
  double c_rho = 0.0;
  double kappa_margin = 0.0;  // r_rho + c_rho - 1; (rho,kappa)-well-bounded iff >= kappa
};

// Bulk capacities of a scaled cost matrix: r_rho is the smallest v-weighted
// mass any row places on entries <= rho, c_rho the column analog. Targets are
// normalized to unit mass internally.
inline WellBoundednessReport well_bounded(const Matrix& scaled_cost, const Marginals& targets,
                                          double rho) {
  if (!(rho >= 0.0)) throw InvalidInputError("well_bounded: rho must be nonnegative");
  if (scaled_cost.rows() != targets.u.size() || scaled_cost.cols() != targets.v.size())
    throw InvalidInputError("well_bounded: dimension mismatch");
  double su = 0.0, sv = 0.0;
  for (double x : targets.u) su += x;
  for (double x : targets.v) sv += x;

  WellBoundednessReport rep;
  rep.rho = rho;
  double r_rho = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scaled_cost.rows(); ++i) {
    double w = 0.0;
    for (std::size_t j = 0; j < scaled_cost.cols(); ++j)
      if (scaled_cost(i, j) <= rho) w += targets.v[j];
    r_rho = std::min(r_rho, w / sv);
  }
  double c_rho = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < scaled_cost.cols(); ++j) {
    double w = 0.0;
    for (std::size_t i = 0; i < scaled_cost.rows(); ++i)
      if (scaled_cost(i, j) <= rho) w += targets.u[i];
    c_rho = std::min(c_rho, w / su);
  }
  rep.r_rho = r_rho;
  rep.c_rho = c_rho;
  rep.kappa_margin = r_rho + c_rho - 1.0;
  return rep;
}

namespace detail {

// Dinic max-flow on a small dense graph with real capacities.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t nodes) : head_(nodes, -1), level_(nodes), it_(nodes) {}

  void add_edge(std::size_t from, std::size_t to, double cap) {
    edges_.push_back({to, head_[from], cap});
    head_[from] = static_cast<int>(edges_.size()) - 1;
    edges_.push_back({from, head_[to], 0.0});
    head_[to] = static_cast<int>(edges_.size()) - 1;
  }

  double run(std::size_t s, std::size_t t) {
    double flow = 0.0;
    while (bfs(s, t)) {
      it_ = head_;
      while (double pushed = dfs(s, t, std::numeric_limits<double>::infinity())) flow += pushed;
    }
    return flow;
  }

  // Nodes reachable from s in the residual graph after run().
  std::vector<bool> reachable(std::size_t s) const {
    std::vector<bool> seen(head_.size(), false);
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = true;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (int e = head_[u]; e != -1; e = edges_[e].next)
        if (edges_[e].cap > kEps && !seen[edges_[e].to]) {
          seen[edges_[e].to] = true;
          q.push(edges_[e].to);
        }
    }
    return seen;
  }

 private:
  static constexpr double kEps = 1e-12;

  struct Edge {
    std::size_t to;
    int next;
    double cap;
  };

  bool bfs(std::size_t s, std::size_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> q;
    q.push(s);
    level_[s] = 0;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (int e = head_[u]; e != -1; e = edges_[e].next)
        if (edges_[e].cap > kEps && level_[edges_[e].to] < 0) {
          level_[edges_[e].to] = level_[u] + 1;
          q.push(edges_[e].to);
        }
    }
    return level_[t] >= 0;
  }

  double dfs(std::size_t u, std::size_t t, double limit) {
    if (u == t || limit <= kEps) return u == t ? limit : 0.0;
    for (int& e = it_[u]; e != -1; e = edges_[e].next) {
      Edge& fwd = edges_[e];
      if (fwd.cap > kEps && level_[fwd.to] == level_[u] + 1) {
        const double pushed = dfs(fwd.to, t, std::min(limit, fwd.cap));
        if (pushed > 0.0) {
          fwd.cap -= pushed;
          edges_[e ^ 1].cap += pushed;
          return pushed;
        }
      }
    }
    return 0.0;
  }

  std::vector<Edge> edges_;
  std::vector<int> head_;
  std::vector<int> level_;
  std::vector<int> it_;
};

}  // namespace detail

enum class ScalabilityVerdict { Feasible, Infeasible };

struct ScalabilityReport {
  ScalabilityVerdict verdict = ScalabilityVerdict::Infeasible;
  double flow_value = 0.0;
  double supply = 0.0;
  // On Infeasible: rows S whose targets cannot be routed and the columns T
  // outside their support (0-based).
  std::vector<std::size_t> cut_rows;
  std::vector<std::size_t> cut_cols;
  std::string note;

  bool feasible() const { return verdict == ScalabilityVerdict::Feasible; }
};

// Transportation feasibility on the support pattern: supplies u_i, demands
// v_j, an uncapacitated arc wherever A_ij > 0. Feasible iff the max flow
// carries the whole supply (within 1e-9). This certifies approximate
// scalability; exact scalability would need support conditions beyond this
// check, so the verdict is labeled "feasible (approximate sense)".
inline ScalabilityReport scalability_check(const ScalingInstance& instance) {
  const Matrix& a = instance.matrix;
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t source = 0, sink = m + n + 1;
  detail::MaxFlow flow(m + n + 2);
  double supply = 0.0;
  for (double x : instance.targets.u) supply += x;
  const double inf_cap = 2.0 * supply + 1.0;
  for (std::size_t i = 0; i < m; ++i) flow.add_edge(source, 1 + i, instance.targets.u[i]);
  for (std::size_t j = 0; j < n; ++j) flow.add_edge(1 + m + j, sink, instance.targets.v[j]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j) > 0.0) flow.add_edge(1 + i, 1 + m + j, inf_cap);

  ScalabilityReport rep;
  rep.supply = supply;
  rep.flow_value = flow.run(source, sink);
  if (rep.flow_value >= supply - 1e-9) {
    rep.verdict = ScalabilityVerdict::Feasible;
    rep.note = "feasible (approximate sense)";
    return rep;
  }
  rep.verdict = ScalabilityVerdict::Infeasible;
  rep.note = "transportation polytope on the support is empty";
  const auto seen = flow.reachable(source);
  for (std::size_t i = 0; i < m; ++i)
    if (seen[1 + i]) rep.cut_rows.push_back(i);
  for (std::size_t j = 0; j < n; ++j)
    if (!seen[1 + m + j]) rep.cut_cols.push_back(j);
  return rep;
}

// Everything at once: nu, the best density triple, well-boundedness at the
// requested rho, and the feasibility verdict.
struct DiagnosticsReport {
  double nu = 0.0;
  DensityReport density;
  WellBoundednessReport well_bounded;
  ScalabilityReport scalability;
};

inline DiagnosticsReport diagnose(const ScalingInstance& instance, double rho = 1.0) {
  DiagnosticsReport rep;
  rep.nu = nu(instance.matrix);
  rep.density = best_rho(instance.matrix, instance.targets);
  rep.well_bounded = well_bounded(instance.matrix, instance.targets, rho);
  rep.scalability = scalability_check(instance);
  return rep;
}

}  // namespace sinkscale
