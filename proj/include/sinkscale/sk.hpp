#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "sinkscale/matrix.hpp"
#include "sinkscale/permanent.hpp"

namespace sinkscale {

// State of a Sinkhorn-Knopp run. `steps` counts normalizations applied so
// far, so after steps >= 1 the current matrix is A^(steps-1) in the usual
// superscript convention: step 0 row-normalizes to u, odd steps
// column-normalize to v, even steps > 0 row-normalize to u.
struct SkState {
  Matrix current;
  std::size_t steps = 0;
  std::vector<double> row_scalers;  // cumulative x: current = diag(x) A0 diag(y)
  std::vector<double> col_scalers;  // cumulative y

  static SkState initial(const ScalingInstance& instance) {
    SkState s;
    s.current = instance.matrix;
    s.steps = 0;
    s.row_scalers.assign(instance.matrix.rows(), 1.0);
    s.col_scalers.assign(instance.matrix.cols(), 1.0);
    return s;
  }

  // Index of the last performed step (A^(k) superscript); steps must be >= 1.
  std::size_t last_step() const { return steps - 1; }
};

// L1 deviations of the row and column sum vectors from the targets, summed in
// fixed index order.
inline std::pair<double, double> marginal_error_l1(const Matrix& m, const Marginals& targets) {
  if (m.rows() != targets.u.size() || m.cols() != targets.v.size())
    throw InvalidInputError("marginal_error_l1: dimension mismatch");
  const auto r = row_sums(m);
  const auto c = col_sums(m);
  double re = 0.0, ce = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) re += std::abs(r[i] - targets.u[i]);
  for (std::size_t j = 0; j < c.size(); ++j) ce += std::abs(c[j] - targets.v[j]);
  return {re, ce};
}

namespace detail {

inline void throw_dividing_sum(const Matrix& m, bool row_step, std::size_t idx) {
  // A zero dividing sum is structural (zero support) or numeric underflow.
  bool has_support = false;
  if (row_step) {
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(idx, j) > 0.0) has_support = true;
  } else {
    for (std::size_t i = 0; i < m.rows(); ++i)
      if (m(i, idx) > 0.0) has_support = true;
  }
  const std::string which = row_step ? "row" : "column";
  if (!has_support)
    throw ZeroMarginalError(which + " " + std::to_string(idx + 1) +
                            " has empty support; instance is not scalable");
  throw NonFiniteError(which + " " + std::to_string(idx + 1) +
                       " sum underflowed to zero; switch to the log-domain engine");
}

inline void sk_step_inplace(SkState& state, const Marginals& targets) {
  Matrix& a = state.current;
  if (a.rows() != targets.u.size() || a.cols() != targets.v.size())
    throw InvalidInputError("sk_step: dimension mismatch");
  const bool row_step = (state.steps % 2 == 0);  // step 0 and even steps normalize rows
  bool finite = true;
  if (row_step) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
      if (s == 0.0) throw_dividing_sum(a, true, i);
      const double scale = targets.u[i] / s;
      if (!std::isfinite(scale))
        throw NonFiniteError("row scale became non-finite at step " + std::to_string(state.steps));
      state.row_scalers[i] *= scale;
      for (std::size_t j = 0; j < a.cols(); ++j) {
        a(i, j) *= scale;
        finite &= std::isfinite(a(i, j));
      }
    }
  } else {
    std::vector<double> c(a.cols(), 0.0);
    for (std::size_t j = 0; j < a.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j);
      if (s == 0.0) throw_dividing_sum(a, false, j);
      c[j] = targets.v[j] / s;
      if (!std::isfinite(c[j]))
        throw NonFiniteError("column scale became non-finite at step " +
                             std::to_string(state.steps));
      state.col_scalers[j] *= c[j];
    }
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) {
        a(i, j) *= c[j];
        finite &= std::isfinite(a(i, j));
      }
  }
  if (!finite)
    throw NonFiniteError("matrix entry became non-finite at step " + std::to_string(state.steps));
  ++state.steps;
}

}  // namespace detail

// One Sinkhorn half-step (a single row or column normalization).
inline SkState sk_step(const SkState& state, const Marginals& targets) {
  SkState next = state;
  detail::sk_step_inplace(next, targets);
  return next;
}

struct TraceRow {
  std::size_t iter = 0;
  double row_err = 0.0, col_err = 0.0, total_err = 0.0;
  double min_rsum = 0.0, max_rsum = 0.0, min_csum = 0.0, max_csum = 0.0;
  double min_entry = 0.0, max_entry = 0.0;
  std::optional<double> permanent;
};

struct SkTrace {
  std::vector<TraceRow> rows;

  void to_csv(std::ostream& os) const {
    os << "iter,row_err,col_err,total_err,min_rsum,max_rsum,min_csum,max_csum,"
          "min_entry,max_entry,permanent\n";
    for (const auto& r : rows) {
      os << r.iter << ',' << format_double_csv(r.row_err) << ',' << format_double_csv(r.col_err)
         << ',' << format_double_csv(r.total_err) << ',' << format_double_csv(r.min_rsum) << ','
         << format_double_csv(r.max_rsum) << ',' << format_double_csv(r.min_csum) << ','
         << format_double_csv(r.max_csum) << ',' << format_double_csv(r.min_entry) << ','
         << format_double_csv(r.max_entry) << ',';
      if (r.permanent) os << format_double_csv(*r.permanent);
      os << '\n';
    }
  }

 private:
  static std::string format_double_csv(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
  }
};

struct TraceOptions {
  bool with_permanent = false;  // requires a square matrix with n <= 12
};

inline TraceRow make_trace_row(std::size_t iter, const Matrix& m, const Marginals& targets,
                               bool with_permanent) {
  TraceRow row;
  row.iter = iter;
  const auto r = row_sums(m);
  const auto c = col_sums(m);
  double re = 0.0, ce = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) re += std::abs(r[i] - targets.u[i]);
  for (std::size_t j = 0; j < c.size(); ++j) ce += std::abs(c[j] - targets.v[j]);
  row.row_err = re;
  row.col_err = ce;
  row.total_err = re + ce;
  row.min_rsum = *std::min_element(r.begin(), r.end());
  row.max_rsum = *std::max_element(r.begin(), r.end());
  row.min_csum = *std::min_element(c.begin(), c.end());
  row.max_csum = *std::max_element(c.begin(), c.end());
  row.min_entry = min_entry(m);
  row.max_entry = max_entry(m);
  if (with_permanent) row.permanent = permanent(m);
  return row;
}

struct SkRunResult {
  SkState state;
  SkTrace trace;
  bool converged = false;
  std::size_t iterations = 0;  // step index k at which total_err first fell below eps
};

// Iterate until the total marginal error drops to eps or max_iter
// normalizations have been applied. The error is evaluated after every
// half-step and the trace holds one record per step, including step 0.
// Reaching max_iter is not an error: converged is simply false.
inline SkRunResult sk_run(const ScalingInstance& instance, double eps, std::size_t max_iter,
                          const TraceOptions& opts = {}) {
  if (!(eps > 0.0)) throw InvalidInputError("sk_run: eps must be positive");
  if (max_iter == 0) throw InvalidInputError("sk_run: max_iter must be positive");
  if (opts.with_permanent &&
      (instance.matrix.rows() != instance.matrix.cols() || instance.matrix.rows() > 12))
    throw TooLargeError("permanent tracing requires a square matrix with n <= 12");
  SkRunResult out;
  out.state = SkState::initial(instance);
  for (std::size_t k = 0; k < max_iter; ++k) {
    detail::sk_step_inplace(out.state, instance.targets);
    TraceRow row = make_trace_row(k, out.state.current, instance.targets, opts.with_permanent);
    out.trace.rows.push_back(row);
    out.iterations = k;
    if (row.total_err <= eps) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Run exactly `steps` normalizations and return every intermediate matrix
// A^(0), ..., A^(steps-1).
inline std::vector<Matrix> sk_collect_states(const ScalingInstance& instance, std::size_t steps) {
  std::vector<Matrix> states;
  states.reserve(steps);
  SkState s = SkState::initial(instance);
  for (std::size_t k = 0; k < steps; ++k) {
    detail::sk_step_inplace(s, instance.targets);
    states.push_back(s.current);
  }
  return states;
}

// nu(A): ratio of the smallest positive to the largest entry after row
// normalization. Zeros are excluded from the minimum; the result lies in
// (0, 1].
inline double nu(const Matrix& m) {
  const auto r = row_sums(m);
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (!(r[i] > 0.0)) throw InvalidInputError("nu: zero row");
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double x = m(i, j) / r[i];
      if (x > hi) hi = x;
      if (m(i, j) > 0.0 && x < lo) lo = x;
    }
  }
  if (!(hi > 0.0)) throw InvalidInputError("nu: matrix has no positive entry");
  return lo / hi;
}

// Mean absolute deviation of the non-normalized marginal from 1 for a
// standardized square matrix (all row sums 1, or all column sums 1, to
// 1e-10).
inline double accuracy_alpha(const Matrix& m) {
  if (m.rows() != m.cols()) throw NotStandardizedError("accuracy is defined for square matrices");
  const double tol = 1e-10;
  const auto r = row_sums(m);
  const auto c = col_sums(m);
  bool rows_one = true, cols_one = true;
  for (double x : r) rows_one &= std::abs(x - 1.0) <= tol;
  for (double x : c) cols_one &= std::abs(x - 1.0) <= tol;
  if (!rows_one && !cols_one)
    throw NotStandardizedError("matrix is not standardized: neither marginal is uniformly 1");
  const auto& dev = rows_one ? c : r;
  double s = 0.0;
  for (double x : dev) s += std::abs(x - 1.0);
  return s / static_cast<double>(m.rows());
}

}  // namespace sinkscale
