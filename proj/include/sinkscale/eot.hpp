#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sinkscale/matrix.hpp"
#include "sinkscale/sk.hpp"

namespace sinkscale {

// Entropic OT problem: kernel exp(-eta*C) scaled to marginals (u, v).
// +infinity costs express forbidden pairs and map to kernel entries that are
// exactly zero.
struct EotProblem {
  Matrix cost;
  double eta = 1.0;
  Marginals targets;
  bool prescale = false;

  void validate() const {
    if (!(eta > 0.0)) throw InvalidInputError("eot: eta must be positive");
    if (cost.rows() != targets.u.size() || cost.cols() != targets.v.size())
      throw InvalidInputError("eot: cost dimensions do not match targets");
    for (double x : cost.data())
      if (std::isnan(x) || x < 0.0) throw InvalidInputError("eot: cost entries must be >= 0");
  }
};

struct DualPotentials {
  std::vector<double> f;  // log row scalers
  std::vector<double> g;  // log column scalers
};

enum class Domain { Auto, Direct, Log };

// Entrywise exp(-eta * C); +infinity cost becomes exactly 0.
inline Matrix build_kernel(const Matrix& cost, double eta) {
  if (!(eta > 0.0)) throw InvalidInputError("build_kernel: eta must be positive");
  Matrix k(cost.rows(), cost.cols());
  bool any_positive = false;
  for (std::size_t i = 0; i < cost.rows(); ++i)
    for (std::size_t j = 0; j < cost.cols(); ++j) {
      k(i, j) = cost(i, j) == kInf ? 0.0 : std::exp(-eta * cost(i, j));
      any_positive |= k(i, j) > 0.0;
    }
  if (!any_positive)
    throw AllZeroKernelError("every kernel entry underflowed to 0; use the log-domain path");
  return k;
}

// diag(u) * K * diag(v): entry (i, j) multiplied by u_i * v_j.
inline Matrix prescale(const Matrix& kernel, const Marginals& targets) {
  if (kernel.rows() != targets.u.size() || kernel.cols() != targets.v.size())
    throw InvalidInputError("prescale: dimension mismatch");
  Matrix out(kernel.rows(), kernel.cols());
  for (std::size_t i = 0; i < kernel.rows(); ++i)
    for (std::size_t j = 0; j < kernel.cols(); ++j)
      out(i, j) = targets.u[i] * kernel(i, j) * targets.v[j];
  return out;
}

// Two-pass log-sum-exp in fixed index order (max first, then the exp sum).
inline double log_sum_exp(const double* xs, std::size_t count, std::size_t stride) {
  double mx = -kInf;
  for (std::size_t k = 0; k < count; ++k) mx = std::max(mx, xs[k * stride]);
  if (mx == -kInf) return -kInf;
  double s = 0.0;
  for (std::size_t k = 0; k < count; ++k) s += std::exp(xs[k * stride] - mx);
  return mx + std::log(s);
}

enum class Axis { Rows, Cols };

// Subtracts the log-sum-exp of each row (resp. column) and adds the log
// target; mathematically identical to a Sinkhorn half-step on exp of the
// state. Returns the additive shift applied to each line.
//
// Entries are rewritten as (x - max) + (log target - log sum), so a constant
// added to a whole line cancels inside x - max and the normalized state does
// not depend on it (bit-exact whenever the additions themselves are exact).
inline std::vector<double> logsumexp_normalize(Matrix& logm, Axis axis,
                                               const std::vector<double>& targets) {
  const bool rows = axis == Axis::Rows;
  const std::size_t lines = rows ? logm.rows() : logm.cols();
  const std::size_t len = rows ? logm.cols() : logm.rows();
  if (targets.size() != lines) throw InvalidInputError("logsumexp_normalize: dimension mismatch");
  std::vector<double> shifts(lines, 0.0);
  for (std::size_t i = 0; i < lines; ++i) {
    if (!(targets[i] > 0.0) || !std::isfinite(targets[i]))
      throw InvalidInputError("logsumexp_normalize: targets must be positive and finite");
    double* base = rows ? &logm.data()[i * logm.cols()] : &logm.data()[i];
    const std::size_t stride = rows ? 1 : logm.cols();
    double mx = -kInf;
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, base[k * stride]);
    if (mx == -kInf)
      throw EmptySupportError(std::string(rows ? "row " : "column ") + std::to_string(i + 1) +
                              " is entirely -infinity");
    double sum = 0.0;
    for (std::size_t k = 0; k < len; ++k) sum += std::exp(base[k * stride] - mx);
    const double rest = std::log(targets[i]) - std::log(sum);
    shifts[i] = rest - mx;
    for (std::size_t k = 0; k < len; ++k) base[k * stride] = (base[k * stride] - mx) + rest;
  }
  return shifts;
}

struct LogSkRunResult {
  Matrix log_state;
  std::vector<double> f;  // cumulative log row shifts
  std::vector<double> g;  // cumulative log column shifts
  SkTrace trace;
  bool converged = false;
  std::size_t iterations = 0;
};

inline Matrix exp_matrix(const Matrix& logm) {
  Matrix out(logm.rows(), logm.cols());
  for (std::size_t k = 0; k < logm.data().size(); ++k) out.data()[k] = std::exp(logm.data()[k]);
  return out;
}

// Log-domain Sinkhorn on a log-kernel (entries may be -infinity). Same
// stepping and stopping conventions as sk_run.
inline LogSkRunResult log_sk_run(Matrix log0, const Marginals& targets, double eps,
                                 std::size_t max_iter, const TraceOptions& opts = {}) {
  if (!(eps > 0.0)) throw InvalidInputError("log_sk_run: eps must be positive");
  if (max_iter == 0) throw InvalidInputError("log_sk_run: max_iter must be positive");
  if (opts.with_permanent && (log0.rows() != log0.cols() || log0.rows() > 12))
    throw TooLargeError("permanent tracing requires a square matrix with n <= 12");
  LogSkRunResult out;
  out.log_state = std::move(log0);
  out.f.assign(out.log_state.rows(), 0.0);
  out.g.assign(out.log_state.cols(), 0.0);
  for (std::size_t k = 0; k < max_iter; ++k) {
    if (k % 2 == 0) {
      const auto shifts = logsumexp_normalize(out.log_state, Axis::Rows, targets.u);
      for (std::size_t i = 0; i < shifts.size(); ++i) out.f[i] += shifts[i];
    } else {
      const auto shifts = logsumexp_normalize(out.log_state, Axis::Cols, targets.v);
      for (std::size_t j = 0; j < shifts.size(); ++j) out.g[j] += shifts[j];
    }
    const Matrix plan = exp_matrix(out.log_state);
    TraceRow row = make_trace_row(k, plan, targets, opts.with_permanent);
    out.trace.rows.push_back(row);
    out.iterations = k;
    if (row.total_err <= eps) {
      out.converged = true;
      break;
    }
  }
  return out;
}

struct EotResult {
  Matrix plan;
  DualPotentials potentials;
  SkTrace trace;
  bool converged = false;
  std::size_t iterations = 0;
  Domain domain_used = Domain::Direct;
};

namespace detail {

inline double max_finite_cost(const Matrix& cost) {
  double mx = 0.0;
  for (double x : cost.data())
    if (x != kInf) mx = std::max(mx, x);
  return mx;
}

inline void check_kernel_support(const Matrix& cost) {
  for (std::size_t i = 0; i < cost.rows(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < cost.cols(); ++j) any |= cost(i, j) != kInf;
    if (!any)
      throw InvalidInputError("row " + std::to_string(i + 1) +
                              " of the cost matrix forbids every pair");
  }
  for (std::size_t j = 0; j < cost.cols(); ++j) {
    bool any = false;
    for (std::size_t i = 0; i < cost.rows(); ++i) any |= cost(i, j) != kInf;
    if (!any)
      throw InvalidInputError("column " + std::to_string(j + 1) +
                              " of the cost matrix forbids every pair");
  }
}

inline EotResult solve_eot_log(const EotProblem& problem, double eps, std::size_t max_iter,
                               const TraceOptions& opts) {
  Matrix logk(problem.cost.rows(), problem.cost.cols());
  for (std::size_t i = 0; i < logk.rows(); ++i)
    for (std::size_t j = 0; j < logk.cols(); ++j) {
      logk(i, j) = problem.cost(i, j) == kInf ? -kInf : -problem.eta * problem.cost(i, j);
      if (problem.prescale)
        logk(i, j) += std::log(problem.targets.u[i]) + std::log(problem.targets.v[j]);
    }
  LogSkRunResult run = log_sk_run(std::move(logk), problem.targets, eps, max_iter, opts);
  EotResult out;
  out.plan = exp_matrix(run.log_state);
  out.potentials.f = std::move(run.f);
  out.potentials.g = std::move(run.g);
  if (problem.prescale) {
    for (std::size_t i = 0; i < out.potentials.f.size(); ++i)
      out.potentials.f[i] += std::log(problem.targets.u[i]);
    for (std::size_t j = 0; j < out.potentials.g.size(); ++j)
      out.potentials.g[j] += std::log(problem.targets.v[j]);
  }
  out.trace = std::move(run.trace);
  out.converged = run.converged;
  out.iterations = run.iterations;
  out.domain_used = Domain::Log;
  return out;
}

inline EotResult solve_eot_direct(const EotProblem& problem, double eps, std::size_t max_iter,
                                  const TraceOptions& opts) {
  Matrix kernel = build_kernel(problem.cost, problem.eta);
  Matrix input = problem.prescale ? prescale(kernel, problem.targets) : kernel;
  ScalingInstance instance(std::move(input), problem.targets);
  SkRunResult run = sk_run(instance, eps, max_iter, opts);
  EotResult out;
  out.plan = std::move(run.state.current);
  out.potentials.f.resize(run.state.row_scalers.size());
  out.potentials.g.resize(run.state.col_scalers.size());
  for (std::size_t i = 0; i < out.potentials.f.size(); ++i) {
    double x = run.state.row_scalers[i];
    if (problem.prescale) x *= problem.targets.u[i];
    out.potentials.f[i] = std::log(x);
  }
  for (std::size_t j = 0; j < out.potentials.g.size(); ++j) {
    double y = run.state.col_scalers[j];
    if (problem.prescale) y *= problem.targets.v[j];
    out.potentials.g[j] = std::log(y);
  }
  out.trace = std::move(run.trace);
  out.converged = run.converged;
  out.iterations = run.iterations;
  out.domain_used = Domain::Direct;
  return out;
}

}  // namespace detail

// Scales the Gibbs kernel to the target marginals. Auto domain selection uses
// the direct engine while eta*max(C) <= 30 (exp(-30) is still comfortably
// representable) and the log-domain engine beyond; a direct-domain NonFinite
// under Auto also escalates to the log engine.
inline EotResult solve_eot(const EotProblem& problem, double eps, std::size_t max_iter,
                           Domain domain = Domain::Auto, const TraceOptions& opts = {}) {
  problem.validate();
  detail::check_kernel_support(problem.cost);
  switch (domain) {
    case Domain::Direct:
      return detail::solve_eot_direct(problem, eps, max_iter, opts);
    case Domain::Log:
      return detail::solve_eot_log(problem, eps, max_iter, opts);
    case Domain::Auto:
      break;
  }
  if (problem.eta * detail::max_finite_cost(problem.cost) <= 30.0) {
    try {
      return detail::solve_eot_direct(problem, eps, max_iter, opts);
    } catch (const NonFiniteError&) {
      // fall through to the log engine
    } catch (const AllZeroKernelError&) {
    }
  }
  return detail::solve_eot_log(problem, eps, max_iter, opts);
}

}  // namespace sinkscale
