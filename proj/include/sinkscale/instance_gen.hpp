#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sinkscale/diagnostics.hpp"
#include "sinkscale/matrix.hpp"
#include "sinkscale/sk.hpp"

namespace sinkscale {

// Documented generator: SplitMix64 stream with the usual 53-bit double
// mapping. Fully determined by the seed, independent of platform.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }  // [0, 1)

  double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  std::size_t next_index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t state_;
};

enum class Family {
  Thm61Block,
  Thm71Dense,
  Tight2x2,
  Critical2x2,
  UvHard,
  RandomDense,
  RandomBlock,
};

inline const char* family_name(Family f) {
  switch (f) {
    case Family::Thm61Block: return "thm61_block";
    case Family::Thm71Dense: return "thm71_dense";
    case Family::Tight2x2: return "tight2x2";
    case Family::Critical2x2: return "critical2x2";
    case Family::UvHard: return "uv_hard";
    case Family::RandomDense: return "random_dense";
    case Family::RandomBlock: return "random_block";
  }
  return "unknown";
}

inline Family family_from_name(const std::string& name) {
  for (Family f : {Family::Thm61Block, Family::Thm71Dense, Family::Tight2x2, Family::Critical2x2,
                   Family::UvHard, Family::RandomDense, Family::RandomBlock})
    if (name == family_name(f)) return f;
  throw InvalidInputError("unknown instance family: " + name);
}

struct GeneratedInstance {
  ScalingInstance instance;
  // Exact log-domain entries when the direct form would underflow (uv_hard
  // with extreme d); such instances are routed to the log-domain engine.
  std::optional<Matrix> log_matrix;
  bool use_log_domain = false;
  nlohmann::json audit;
};

// ---------------------------------------------------------------------------
// Block lower-bound family: the 2x2-block matrix with theta_{2,1} = nu and
// row sums exactly 1 that decays slowly in the sub-critical regime.

// min{ 5n(n-s)min{s,n-s} / (6n^3+5ns(n-t)), 5t min{t,n-t} / (6n^2+5s(n-t)) }
inline double thm61_decay_floor(std::size_t n, std::size_t t, std::size_t s) {
  const double nd = static_cast<double>(n), td = static_cast<double>(t),
               sd = static_cast<double>(s);
  const double first = 5.0 * nd * (nd - sd) * std::min(sd, nd - sd) /
                       (6.0 * nd * nd * nd + 5.0 * nd * sd * (nd - td));
  const double second =
      5.0 * td * std::min(td, nd - td) / (6.0 * nd * nd + 5.0 * sd * (nd - td));
  return std::min(first, second);
}

// Normalized error eps^(k) computed from block representatives: entries
// (0,0), (0,s), (t,0), (t,s) of the iterate.
inline double thm61_normalized_error(const Matrix& state, std::size_t step, std::size_t n,
                                     std::size_t t, std::size_t s) {
  const double nd = static_cast<double>(n), td = static_cast<double>(t),
               sd = static_cast<double>(s);
  const double theta11 = state(0, 0);
  const double theta12 = state(0, s);
  const double theta22 = state(t, s);
  if (step % 2 == 1) return nd / (nd - td) * (sd * theta11 + (nd - sd) * theta12 - 1.0);
  return nd / sd * (td * theta12 + (nd - td) * theta22 - 1.0);
}

inline GeneratedInstance gen_thm61(std::size_t n, std::size_t t, std::size_t s, double nu_value) {
  if (!(t > 0 && t < s && s < n))
    throw InfeasibleWindowError(1, "thm61: shape condition 0 < t < s < n violated");
  if (!(nu_value > 0.0)) throw InvalidInputError("thm61: nu must be positive");
  const double nd = static_cast<double>(n), td = static_cast<double>(t),
               sd = static_cast<double>(s);
  const double theta21 = nu_value;
  const double theta22 = (1.0 - sd * theta21) / (nd - sd);
  if (!(theta22 > 0.0)) throw InfeasibleWindowError(3, "thm61: s*nu >= 1 leaves theta22 <= 0");

  // The expression E = t*theta12 + (n-t)*theta22 - 1 must land strictly inside
  // the window (st(s-t)/(4n^3), s(n-t)/(n(n-s))). theta11 is free; we place E
  // at the geometric midpoint of the window intersected with the range E can
  // reach while every theta stays positive and theta12 respects its cap.
  const double lo = sd * td * (sd - td) / (4.0 * nd * nd * nd);
  const double hi = sd * (nd - td) / (nd * (nd - sd));
  const double theta12_cap = 6.0 * nd / (6.0 * nd * nd + 5.0 * sd * (nd - td));
  const double e_at_zero = (nd - td) * theta22 - 1.0;              // theta12 -> 0
  const double e_at_full = td / (nd - sd) + (nd - td) * theta22 - 1.0;  // theta11 -> 0
  const double e_at_cap = e_at_zero + td * theta12_cap;
  const double win_lo = std::max(lo, e_at_zero);
  const double win_hi = std::min({hi, e_at_full, e_at_cap});
  if (!(win_lo > 0.0) || !(win_hi > win_lo))
    throw InfeasibleWindowError(5, "thm61: the feasible window for the off-diagonal column sums is empty");
  const double target = std::sqrt(win_lo * win_hi);

  // g(theta11) = t*(1 - s*theta11)/(n-s) + (n-t)*theta22 - 1, decreasing.
  const auto g = [&](double theta11) {
    return td * (1.0 - sd * theta11) / (nd - sd) + (nd - td) * theta22 - 1.0;
  };
  double a = 0.0, b = 1.0 / sd;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (g(mid) > target)
      a = mid;
    else
      b = mid;
  }
  const double theta11 = 0.5 * (a + b);
  const double theta12 = (1.0 - sd * theta11) / (nd - sd);

  if (!(theta11 > 0.0 && theta12 > 0.0))
    throw InfeasibleWindowError(3, "thm61: midpoint placement left a nonpositive block value");
  if (!(theta12 < theta12_cap))
    throw InfeasibleWindowError(2, "thm61: theta12 exceeds its 6n/(6n^2+5s(n-t)) cap");
  const double cond4 = td * theta11 + (nd - td) * theta21 - 1.0;
  if (!((td - nd) / nd < cond4 && cond4 < 0.0))
    throw InfeasibleWindowError(4, "thm61: the left-column sum window is violated");
  const double cond5 = td * theta12 + (nd - td) * theta22 - 1.0;
  if (!(lo < cond5 && cond5 < hi))
    throw InfeasibleWindowError(5, "thm61: the right-column sum window is violated");

  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(i, j) = i < t ? (j < s ? theta11 : theta12) : (j < s ? theta21 : theta22);

  GeneratedInstance out;
  out.instance = ScalingInstance(std::move(m), Marginals::ones(n));
  out.audit = {{"family", "thm61_block"},
               {"n", n},
               {"t", t},
               {"s", s},
               {"nu", nu_value},
               {"theta11", theta11},
               {"theta12", theta12},
               {"theta21", theta21},
               {"theta22", theta22},
               {"left_col_margin", cond4},
               {"right_col_margin", cond5},
               {"window_lo", lo},
               {"window_hi", hi},
               {"decay_floor", thm61_decay_floor(n, t, s)}};
  return out;
}

// ---------------------------------------------------------------------------
// Dense tightness family: the n x (2 + 2n/5) zero-one matrix with uniform u
// and v = (1/n, ..., 1/n, 1/5, 2/5) whose trajectory follows a scalar
// theta-recurrence.

inline GeneratedInstance gen_thm71(std::size_t n) {
  if (n < 10 || n % 10 != 0)
    throw BadDimError("thm71: n must be a positive multiple of 10, got " + std::to_string(n));
  const std::size_t cols = 2 + 2 * n / 5;
  Matrix m(n, cols, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const bool zero_block = (i < n / 2 && j < 2 * n / 5) || (i >= n / 2 && j == cols - 1);
      if (zero_block) m(i, j) = 0.0;
    }
  std::vector<double> u(n, 1.0 / static_cast<double>(n));
  std::vector<double> v(cols, 1.0 / static_cast<double>(n));
  v[cols - 2] = 1.0 / 5.0;
  v[cols - 1] = 2.0 / 5.0;
  GeneratedInstance out;
  out.instance = ScalingInstance(std::move(m), Marginals(std::move(u), std::move(v)));
  out.audit = {{"family", "thm71_dense"},
               {"n", n},
               {"cols", cols},
               {"theta1", (2.0 * static_cast<double>(n) + 5.0) / (2.0 * static_cast<double>(n) + 15.0)},
               {"omega1", (2.0 * static_cast<double>(n) - 5.0) / 10.0}};
  return out;
}

// theta^(k+2) = theta(3 - theta) / (2(1 + theta - theta^2))
inline double thm71_theta_recurrence(double theta) {
  return theta * (3.0 - theta) / (2.0 * (1.0 + theta - theta * theta));
}

// omega^(k+2) = 2 omega (2 + omega) / (5 + 3 omega)
inline double thm71_omega_recurrence(double omega) {
  return 2.0 * omega * (2.0 + omega) / (5.0 + 3.0 * omega);
}

inline double thm71_theta_first(std::size_t n) {
  return (2.0 * static_cast<double>(n) + 5.0) / (2.0 * static_cast<double>(n) + 15.0);
}

inline double thm71_omega_first(std::size_t n) {
  return (2.0 * static_cast<double>(n) - 5.0) / 10.0;
}

// theta^(k) read off a simulated state: (5n/2) times the entry in the top
// block of column 2n/5 + 1.
inline double thm71_theta_from_state(const Matrix& state, std::size_t n) {
  return 2.5 * static_cast<double>(n) * state(0, 2 * n / 5);
}

// ---------------------------------------------------------------------------
// Sparse tightness family: fixed targets u = (5/6, 1/6), v = (7/8, 1/8).

inline GeneratedInstance gen_tight2x2(double a11, double a12, double a21, double a22) {
  Matrix m = Matrix::from_rows({{a11, a12}, {a21, a22}});
  Marginals targets({5.0 / 6.0, 1.0 / 6.0}, {7.0 / 8.0, 1.0 / 8.0});
  ScalingInstance instance(std::move(m), std::move(targets));
  const ScalabilityReport rep = scalability_check(instance);
  if (!rep.feasible())
    throw NotScalableError("tight2x2: support cannot route the targets (flow " +
                           std::to_string(rep.flow_value) + " < " + std::to_string(rep.supply) +
                           ")");
  GeneratedInstance out;
  out.instance = std::move(instance);
  out.audit = {{"family", "tight2x2"},
               {"a11", a11},
               {"a12", a12},
               {"a21", a21},
               {"a22", a22},
               {"nu", nu(out.instance.matrix)}};
  return out;
}

// ---------------------------------------------------------------------------
// Critical-boundary family: u = v = (1/2, 1/2) with rows (p, 1/2-p),
// (q, 1/2-q), plus the exact two-half-step companion recurrence.

inline GeneratedInstance gen_critical2x2(double p, double q) {
  if (!(p >= 0.0 && p <= 0.5 && q >= 0.0 && q <= 0.5))
    throw InvalidInputError("critical2x2: p and q must lie in [0, 1/2]");
  if (!(p + q > 0.0 && p + q < 1.0))
    throw InvalidInputError("critical2x2: need 0 < p + q < 1 for a valid support");
  Matrix m = Matrix::from_rows({{p, 0.5 - p}, {q, 0.5 - q}});
  GeneratedInstance out;
  out.instance = ScalingInstance(std::move(m), Marginals({0.5, 0.5}, {0.5, 0.5}));
  out.audit = {{"family", "critical2x2"},
               {"p", p},
               {"q", q},
               {"delta0", std::abs(2.0 * (p + q) - 1.0)}};
  return out;
}

// Exact column-then-row double step on the (p, q) representation of the
// critical 2x2 iterate; evaluated in extended precision so it can serve as
// an oracle for the matrix engine.
struct CriticalState {
  double p = 0.0;
  double q = 0.0;

  double delta() const { return std::abs(2.0 * (p + q) - 1.0); }
};

inline CriticalState critical_two_step(const CriticalState& st) {
  const long double p = st.p, q = st.q;
  const long double c1 = p + q, c2 = 1.0L - c1;
  const long double ap = p / c1, bp = (0.5L - p) / c2;
  const long double aq = q / c1, bq = (0.5L - q) / c2;
  CriticalState next;
  next.p = static_cast<double>(0.5L * ap / (ap + bp));
  next.q = static_cast<double>(0.5L * aq / (aq + bq));
  return next;
}

// ---------------------------------------------------------------------------
// Sub-critical (u,v)-hard family: block matrix with entries 1 and d where d
// follows the 2^{n/eps} construction, so nu(A) collapses with n/eps.

struct UvHardResult {
  GeneratedInstance generated;
  std::size_t a = 0;  // rows 1..a carry gamma'
  std::size_t b = 0;  // columns 1..b are the d-columns
  double log2_d = 0.0;
};

inline UvHardResult gen_uv_hard(const std::vector<double>& u, const std::vector<double>& v,
                                double gamma, double gamma_prime, double eps) {
  Marginals targets(u, v);
  const std::size_t m = u.size(), n = v.size();
  double su = 0.0;
  for (double x : u) su += x;
  if (std::abs(su - 1.0) > 1e-9)
    throw InvalidInputError("uv_hard: targets must be normalized to unit mass");
  if (!(gamma > 0.0 && gamma_prime > 0.0 && gamma + gamma_prime < 1.0))
    throw InvalidInputError("uv_hard: need gamma, gamma' > 0 with gamma + gamma' < 1");
  if (!(3.0 * eps < 1.0 - gamma - gamma_prime))
    throw InvalidInputError("uv_hard: need 3*eps < 1 - gamma - gamma'");

  // gamma' must be a prefix sum of u, gamma a suffix sum of v.
  std::size_t a = 0;
  {
    double acc = 0.0;
    bool found = false;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      acc += u[i];
      if (std::abs(acc - gamma_prime) <= 1e-12) {
        a = i + 1;
        found = true;
        break;
      }
    }
    if (!found)
      throw InfeasibleGammaPairError("uv_hard: gamma' is not a prefix sum of u within 1e-12");
  }
  std::size_t b = 0;
  {
    double acc = 0.0;
    bool found = false;
    for (std::size_t j = n; j-- > 1;) {
      acc += v[j];
      if (std::abs(acc - gamma) <= 1e-12) {
        b = j;
        found = true;
        break;
      }
    }
    if (!found)
      throw InfeasibleGammaPairError("uv_hard: gamma is not a suffix sum of v within 1e-12");
  }

  const double nd = static_cast<double>(n), bd = static_cast<double>(b);
  const double second_factor =
      (1.0 - gamma - gamma_prime) * (nd - bd) /
      (12.0 * nd * (1.0 - gamma_prime + std::abs(gamma_prime - gamma)));
  const double exponent = nd / eps;
  double log2_d;
  double d;
  if (exponent <= 900.0) {
    d = (nd - bd) / (nd * std::exp2(exponent) - bd) * second_factor;
    log2_d = std::log2(d);
  } else {
    // n*2^{n/eps} dwarfs b beyond any double precision; fold it in log space.
    log2_d = std::log2(nd - bd) - (std::log2(nd) + exponent) + std::log2(second_factor);
    d = std::exp2(log2_d);  // flushes to 0 when below the denormal range
  }

  const bool log_form = !(d >= 1e-300);
  Matrix direct(m, n, 1.0);
  for (std::size_t i = a; i < m; ++i)
    for (std::size_t j = 0; j < b; ++j) direct(i, j) = d;

  UvHardResult out;
  out.a = a;
  out.b = b;
  out.log2_d = log2_d;
  out.generated.instance = ScalingInstance(std::move(direct), std::move(targets));
  if (log_form) {
    Matrix logm(m, n, 0.0);
    const double log_d = log2_d * std::log(2.0);
    for (std::size_t i = a; i < m; ++i)
      for (std::size_t j = 0; j < b; ++j) logm(i, j) = log_d;
    out.generated.log_matrix = std::move(logm);
    out.generated.use_log_domain = true;
  }
  const double nu_formula = d * nd / (d * bd + nd - bd);
  out.generated.audit = {{"family", "uv_hard"},
                         {"m", m},
                         {"n", n},
                         {"a", a},
                         {"b", b},
                         {"gamma", gamma},
                         {"gamma_prime", gamma_prime},
                         {"eps", eps},
                         {"d", d},
                         {"log2_d", log2_d},
                         {"nu_formula", nu_formula},
                         {"log2_nu_formula", log2_d + std::log2(nd / (d * bd + nd - bd))},
                         {"log_domain", log_form}};
  return out;
}

// ---------------------------------------------------------------------------
// Random families.

struct RandomSpec {
  Family family = Family::RandomDense;
  std::size_t m = 8;
  std::size_t n = 8;
  double gamma = 0.6;
  double gamma_prime = 0.6;
  double rho = 0.5;
  std::uint64_t seed = 1;
};

inline GeneratedInstance gen_random(const RandomSpec& spec) {
  SplitMix64 rng(spec.seed);
  GeneratedInstance out;
  if (spec.family == Family::RandomBlock) {
    const std::size_t n = spec.n;
    if (n < 3) throw InvalidInputError("random_block: n must be at least 3");
    const std::size_t t = n / 3 + 1, s = 2 * n / 3;
    const double th11 = rng.next_in(0.1, 1.0), th12 = rng.next_in(0.1, 1.0);
    const double th21 = rng.next_in(0.1, 1.0), th22 = rng.next_in(0.1, 1.0);
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        m(i, j) = i < t ? (j < s ? th11 : th12) : (j < s ? th21 : th22);
    out.instance = ScalingInstance(std::move(m), Marginals::ones(n));
    out.audit = {{"family", "random_block"}, {"n", n}, {"t", t}, {"s", s}, {"seed", spec.seed}};
    return out;
  }
  if (spec.family != Family::RandomDense)
    throw InvalidInputError("gen_random handles the random_dense and random_block families");
  const std::size_t m = spec.m, n = spec.n;
  if (!(spec.rho > 0.0 && spec.rho < 1.0))
    throw InvalidInputError("random_dense: rho must lie in (0, 1)");
  Matrix a(m, n);
  const double filler_hi = 0.9 * spec.rho;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = rng.next_in(0.1 * spec.rho, filler_hi);
  const double active_lo = spec.rho + 0.01 * (1.0 - spec.rho);
  const auto plant = [&](std::size_t i, std::size_t j) { a(i, j) = rng.next_in(active_lo, 1.0); };
  const std::size_t per_row = static_cast<std::size_t>(
      std::ceil(spec.gamma * static_cast<double>(n)));
  const std::size_t per_col = static_cast<std::size_t>(
      std::ceil(spec.gamma_prime * static_cast<double>(m)));
  if (per_row > n || per_col > m)
    throw InvalidInputError("random_dense: gamma or gamma' exceed 1");
  std::vector<std::size_t> cols(n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) cols[j] = j;
    for (std::size_t k = 0; k < per_row; ++k) {
      const std::size_t pick = k + rng.next_index(n - k);
      std::swap(cols[k], cols[pick]);
      plant(i, cols[k]);
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t have = 0;
    for (std::size_t i = 0; i < m; ++i)
      if (a(i, j) >= active_lo) ++have;
    while (have < per_col) {
      const std::size_t i = rng.next_index(m);
      if (a(i, j) < active_lo) {
        plant(i, j);
        ++have;
      }
    }
  }
  a(0, 0) = 1.0;  // pins the max entry, so the rho threshold is rho itself
  out.instance = ScalingInstance(std::move(a), Marginals::uniform(m, n));
  out.audit = {{"family", "random_dense"}, {"m", m},           {"n", n},
               {"gamma", spec.gamma},      {"gamma_prime", spec.gamma_prime},
               {"rho", spec.rho},          {"seed", spec.seed}};
  return out;
}

// ---------------------------------------------------------------------------
// Uniform dispatch for the CLI.

struct InstanceSpec {
  Family family = Family::RandomDense;
  std::map<std::string, double> params;
  std::uint64_t seed = 1;
};

inline GeneratedInstance generate(const InstanceSpec& spec) {
  const auto get = [&](const std::string& key, std::optional<double> fallback =
                                                   std::nullopt) -> double {
    const auto it = spec.params.find(key);
    if (it != spec.params.end()) return it->second;
    if (fallback) return *fallback;
    throw InvalidInputError(std::string("missing parameter '") + key + "' for family " +
                            family_name(spec.family));
  };
  switch (spec.family) {
    case Family::Thm61Block:
      return gen_thm61(static_cast<std::size_t>(get("n")), static_cast<std::size_t>(get("t")),
                       static_cast<std::size_t>(get("s")), get("nu"));
    case Family::Thm71Dense:
      return gen_thm71(static_cast<std::size_t>(get("n")));
    case Family::Tight2x2:
      return gen_tight2x2(get("a11", 1.0), get("a12", 1.0), get("a21", 1.0), get("a22", 1.0));
    case Family::Critical2x2:
      return gen_critical2x2(get("p"), get("q"));
    case Family::UvHard: {
      const std::size_t m = static_cast<std::size_t>(get("m"));
      const std::size_t n = static_cast<std::size_t>(get("n"));
      const std::vector<double> u(m, 1.0 / static_cast<double>(m));
      const std::vector<double> v(n, 1.0 / static_cast<double>(n));
      return gen_uv_hard(u, v, get("gamma"), get("gamma_prime"), get("eps")).generated;
    }
    case Family::RandomDense: {
      RandomSpec rs;
      rs.family = Family::RandomDense;
      rs.m = static_cast<std::size_t>(get("m", 8));
      rs.n = static_cast<std::size_t>(get("n", 8));
      rs.gamma = get("gamma", 0.6);
      rs.gamma_prime = get("gamma_prime", 0.6);
      rs.rho = get("rho", 0.5);
      rs.seed = spec.seed;
      return gen_random(rs);
    }
    case Family::RandomBlock: {
      RandomSpec rs;
      rs.family = Family::RandomBlock;
      rs.n = static_cast<std::size_t>(get("n", 9));
      rs.seed = spec.seed;
      return gen_random(rs);
    }
  }
  throw InvalidInputError("unhandled family");
}

}  // namespace sinkscale
