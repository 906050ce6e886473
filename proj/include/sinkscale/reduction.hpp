#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sinkscale/diagnostics.hpp"
#include "sinkscale/matrix.hpp"
#include "sinkscale/sk.hpp"

namespace sinkscale {

// Integer targets produced by the discretization f1/f2: u' and v' agree with
// floor(L*u) and floor(L*v) up to +1 corrections on a prefix, balanced so
// that ||u'||_1 = ||v'||_1. R is the minimum over all floors before
// correction and t_shift the rounding balance t.
struct IntegerTargets {
  std::vector<long long> u_prime;
  std::vector<long long> v_prime;
  long long L = 0;
  long long R = 0;
  long long t_shift = 0;

  long long total() const {
    long long s = 0;
    for (long long x : u_prime) s += x;
    return s;
  }
};

namespace detail {

// floor(x) with a snap to the nearest integer at 1e-9 absolute, so targets
// that are rational with denominator L discretize exactly despite rounding.
// (L*u stays below ~1e6 here, which keeps representation error under 1e-9.)
inline long long snapped_floor(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9) return static_cast<long long>(r);
  return static_cast<long long>(std::floor(x));
}

inline bool integral_within(double x, double tol) { return std::abs(x - std::round(x)) <= tol; }

}  // namespace detail

inline IntegerTargets discretize(const Marginals& targets, long long L) {
  if (L <= 0) throw InvalidInputError("discretize: L must be a positive integer");
  IntegerTargets out;
  out.L = L;
  out.u_prime.reserve(targets.u.size());
  out.v_prime.reserve(targets.v.size());
  long long min_floor = std::numeric_limits<long long>::max();
  long long su = 0, sv = 0;
  for (double x : targets.u) {
    const long long f = detail::snapped_floor(static_cast<double>(L) * x);
    if (f < 1)
      throw LTooSmallError("discretize: floor(L*u_i) = 0; increase L (L = " + std::to_string(L) +
                           ")");
    out.u_prime.push_back(f);
    su += f;
    min_floor = std::min(min_floor, f);
  }
  for (double x : targets.v) {
    const long long f = detail::snapped_floor(static_cast<double>(L) * x);
    if (f < 1)
      throw LTooSmallError("discretize: floor(L*v_j) = 0; increase L (L = " + std::to_string(L) +
                           ")");
    out.v_prime.push_back(f);
    sv += f;
    min_floor = std::min(min_floor, f);
  }
  out.R = min_floor;
  out.t_shift = su - sv;
  if (out.t_shift >= static_cast<long long>(out.v_prime.size()) ||
      -out.t_shift >= static_cast<long long>(out.u_prime.size()))
    throw InvalidInputError("discretize: rounding balance t = " + std::to_string(out.t_shift) +
                            " exceeds the target length; targets are unbalanced");
  if (out.t_shift >= 0) {
    for (long long k = 0; k < out.t_shift; ++k) ++out.v_prime[static_cast<std::size_t>(k)];
  } else {
    for (long long k = 0; k < -out.t_shift; ++k) ++out.u_prime[static_cast<std::size_t>(k)];
  }
  return out;
}

// Smallest L <= limit making every L*u_i and L*v_j integral, if one exists.
inline std::optional<long long> auto_lcd(const Marginals& targets, long long limit = 1000000) {
  for (long long L = 1; L <= limit; ++L) {
    bool ok = true;
    for (double x : targets.u) ok &= detail::integral_within(static_cast<double>(L) * x, 1e-9);
    if (!ok) continue;
    for (double x : targets.v) ok &= detail::integral_within(static_cast<double>(L) * x, 1e-9);
    if (ok) return L;
  }
  return std::nullopt;
}

// The expanded (1,1)-scaling instance G(A, u', v'): entry A_ij subdivided
// into a u'_i x v'_j block of identical subentries A_ij / (u'_i v'_j),
// blocks contiguous in target order.
struct ReducedInstance {
  Matrix G;                                                  // N x N
  std::vector<std::pair<std::size_t, std::size_t>> row_blocks;  // [begin, end) per source row
  std::vector<std::pair<std::size_t, std::size_t>> col_blocks;
  ScalingInstance origin;
  IntegerTargets targets_int;
};

inline ReducedInstance expand(const ScalingInstance& instance, const IntegerTargets& ti,
                              bool allow_large = false) {
  const Matrix& a = instance.matrix;
  if (ti.u_prime.size() != a.rows() || ti.v_prime.size() != a.cols())
    throw InvalidInputError("expand: integer target lengths do not match the matrix");
  long long nu = 0, nv = 0;
  for (long long x : ti.u_prime) nu += x;
  for (long long x : ti.v_prime) nv += x;
  if (nu != nv) throw InvalidInputError("expand: integer targets are unbalanced");
  if (nu > 20000 && !allow_large)
    throw TooLargeError("expand: N = " + std::to_string(nu) +
                        " exceeds the 20000 guard; pass allow_large to override");
  const std::size_t N = static_cast<std::size_t>(nu);

  ReducedInstance out;
  out.origin = instance;
  out.targets_int = ti;
  out.G = Matrix(N, N);
  out.row_blocks.reserve(a.rows());
  out.col_blocks.reserve(a.cols());
  std::size_t off = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    out.row_blocks.emplace_back(off, off + static_cast<std::size_t>(ti.u_prime[i]));
    off += static_cast<std::size_t>(ti.u_prime[i]);
  }
  off = 0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    out.col_blocks.emplace_back(off, off + static_cast<std::size_t>(ti.v_prime[j]));
    off += static_cast<std::size_t>(ti.v_prime[j]);
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double value =
          a(i, j) / (static_cast<double>(ti.u_prime[i]) * static_cast<double>(ti.v_prime[j]));
      for (std::size_t ii = out.row_blocks[i].first; ii < out.row_blocks[i].second; ++ii)
        for (std::size_t jj = out.col_blocks[j].first; jj < out.col_blocks[j].second; ++jj)
          out.G(ii, jj) = value;
    }
  }
  return out;
}

// D(u') * G * D(v'), where D(w) repeats each w_i along the diagonal w_i times;
// entry (i', j') recovers the originating A_ij.
inline Matrix recover_dense(const ReducedInstance& reduced) {
  const std::size_t N = reduced.G.rows();
  Matrix d(N, N);
  for (std::size_t i = 0; i < reduced.row_blocks.size(); ++i) {
    const double ui = static_cast<double>(reduced.targets_int.u_prime[i]);
    for (std::size_t j = 0; j < reduced.col_blocks.size(); ++j) {
      const double vj = static_cast<double>(reduced.targets_int.v_prime[j]);
      for (std::size_t ii = reduced.row_blocks[i].first; ii < reduced.row_blocks[i].second; ++ii)
        for (std::size_t jj = reduced.col_blocks[j].first; jj < reduced.col_blocks[j].second; ++jj)
          d(ii, jj) = ui * reduced.G(ii, jj) * vj;
    }
  }
  return d;
}

struct EquivalenceReport {
  long long L = 0;
  long long R = 0;
  long long t_shift = 0;
  bool exact_branch = false;          // L*u and L*v integral: per-step equality holds
  std::vector<double> err_uv;         // ||r-u||_1 + ||c-v||_1 on the original run
  std::vector<double> err_reduced;    // ||r-1||_1 + ||c-1||_1 on the expanded run
  std::vector<double> deviation;      // |err_uv - err_reduced / L|
  std::vector<double> slack;          // n/L + (R/(R-1))^(3^(k+1)) - 1, 0 on the exact branch
  double max_deviation = 0.0;
};

// Runs SK on (A, (u, v)) and on (G, (1, 1)) side by side for `steps`
// half-steps and reports the per-step error deviation against the reduction
// identity err_uv = err_reduced / L. Both trajectories use the same
// floating-point engine and summation order.
inline EquivalenceReport verify_equivalence(const ScalingInstance& instance, long long L,
                                            std::size_t steps, bool allow_large = false) {
  IntegerTargets ti = discretize(instance.targets, L);
  ReducedInstance reduced = expand(instance, ti, allow_large);

  EquivalenceReport rep;
  rep.L = L;
  rep.R = ti.R;
  rep.t_shift = ti.t_shift;
  rep.exact_branch = true;
  for (double x : instance.targets.u)
    rep.exact_branch &= detail::integral_within(static_cast<double>(L) * x, 1e-9);
  for (double x : instance.targets.v)
    rep.exact_branch &= detail::integral_within(static_cast<double>(L) * x, 1e-9);
  // Equality holds for any R on the exact branch; the slack bound is what
  // needs R >= 2.
  if (!rep.exact_branch && ti.R < 2)
    throw LTooSmallError("verify_equivalence: R = " + std::to_string(ti.R) +
                         " but the reduction bound needs R >= 2");

  SkState uv = SkState::initial(instance);
  ScalingInstance reduced_instance(reduced.G, Marginals::ones(reduced.G.rows()));
  SkState one = SkState::initial(reduced_instance);
  const double log_ratio = std::log(static_cast<double>(ti.R) / static_cast<double>(ti.R - 1));
  for (std::size_t k = 0; k < steps; ++k) {
    detail::sk_step_inplace(uv, instance.targets);
    detail::sk_step_inplace(one, reduced_instance.targets);
    const auto [ru, cu] = marginal_error_l1(uv.current, instance.targets);
    const auto [r1, c1] = marginal_error_l1(one.current, reduced_instance.targets);
    rep.err_uv.push_back(ru + cu);
    rep.err_reduced.push_back(r1 + c1);
    const double dev = std::abs((ru + cu) - (r1 + c1) / static_cast<double>(L));
    rep.deviation.push_back(dev);
    rep.max_deviation = std::max(rep.max_deviation, dev);
    if (rep.exact_branch) {
      rep.slack.push_back(0.0);
    } else {
      const double exponent = std::pow(3.0, static_cast<double>(k) + 1.0) * log_ratio;
      const double growth = exponent > 700.0 ? kInf : std::expm1(exponent);
      rep.slack.push_back(static_cast<double>(instance.matrix.cols()) / static_cast<double>(L) +
                          growth);
    }
  }
  return rep;
}

struct BlockValues {
  double x = 0.0, y = 0.0, z = 0.0, q = 0.0;
};

// Closed form for A^(2) of the subdivided block matrix: with
// S1 = sum_{j<=s} 1/v_j, S2 = sum_{j>s} 1/v_j and
// lambda = (S1+S2)/(d*S1+S2), the four block values after two SK steps.
inline BlockValues block_closed_form(std::size_t n, std::size_t t, std::size_t s, double d,
                                     const std::vector<double>& v) {
  if (!(t > 0 && t < s && s < n)) throw InvalidInputError("block_closed_form: need 0 < t < s < n");
  if (!(d > 0.0)) throw InvalidInputError("block_closed_form: d must be positive");
  if (v.size() != n) throw InvalidInputError("block_closed_form: v must have length n");
  for (double x : v)
    if (!(x > 0.0)) throw InvalidInputError("block_closed_form: v must be strictly positive");
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t j = 0; j < s; ++j) s1 += 1.0 / v[j];
  for (std::size_t j = s; j < n; ++j) s2 += 1.0 / v[j];
  const double lambda = (s1 + s2) / (d * s1 + s2);
  const double nd = static_cast<double>(n), td = static_cast<double>(t),
               sd = static_cast<double>(s);
  const double top_den = nd * td + lambda * (nd - td) * (sd + d * (nd - sd));
  const double bot_den = td * (nd - sd + d * sd) + d * lambda * nd * (nd - td);
  BlockValues out;
  out.x = (td + lambda * (nd - td)) / top_den;
  out.y = (td + d * lambda * (nd - td)) / top_den;
  out.z = d * (td + lambda * (nd - td)) / bot_den;
  out.q = (td + d * lambda * (nd - td)) / bot_den;
  return out;
}

// The n x n input matrix of the two-step closed form: pattern entry 1 (or d
// on the bottom-left block) divided by u_i * v_j.
inline Matrix make_block_matrix(std::size_t n, std::size_t t, std::size_t s, double d,
                                const std::vector<double>& u, const std::vector<double>& v) {
  if (!(t > 0 && t < s && s < n)) throw InvalidInputError("make_block_matrix: need 0 < t < s < n");
  if (u.size() != n || v.size() != n)
    throw InvalidInputError("make_block_matrix: u and v must have length n");
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double pattern = (i >= t && j < s) ? d : 1.0;
      a(i, j) = pattern / (u[i] * v[j]);
    }
  return a;
}

struct RecoveryRatioReport {
  double measured_min = 0.0;  // min over entries of r_i(C) B_ij / (r_i(B) C_ij)
  double bound = 0.0;         // the alpha * rho * gamma / n floor (asymptotic in L)
};

// Measured discrepancy between the expanded matrix B = G and its dense
// recovery C = D(u') G D(v'), reported against the alpha*rho*gamma/n floor.
// The floor is only guaranteed for sufficiently large L, so this is a
// diagnostic, not a certificate.
inline RecoveryRatioReport recovery_ratio(const ReducedInstance& reduced,
                                          const DensityReport& dens) {
  const Matrix& b = reduced.G;
  const Matrix c = recover_dense(reduced);
  const auto rb = row_sums(b);
  const auto rc = row_sums(c);
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      if (c(i, j) > 0.0) lo = std::min(lo, rc[i] * b(i, j) / (rb[i] * c(i, j)));
  RecoveryRatioReport rep;
  rep.measured_min = lo;
  const double gsum = dens.gamma + dens.gamma_prime;
  const double alpha = (gsum + 1.0) / (2.0 * gsum);
  rep.bound = alpha * dens.rho * dens.gamma / static_cast<double>(reduced.origin.matrix.cols());
  return rep;
}

}  // namespace sinkscale
