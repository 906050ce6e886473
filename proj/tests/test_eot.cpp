#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "sinkscale/eot.hpp"
#include "sinkscale/sk.hpp"
#include "test_util.hpp"

using namespace sinkscale;

TEST_CASE("kernel construction", "[eot]") {
  Matrix zero_cost(2, 3, 0.0);
  Matrix k = build_kernel(zero_cost, 2.0);
  for (double x : k.data()) CHECK(x == 1.0);

  Matrix c = Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}});
  Matrix k2 = build_kernel(c, 1.0);
  CHECK(k2(0, 0) == 1.0);
  CHECK(k2(0, 1) == Catch::Approx(std::exp(-1.0)).margin(1e-16));

  Matrix forbidden = Matrix::from_rows({{0.0, kInf}, {kInf, 0.0}});
  Matrix k3 = build_kernel(forbidden, 1.0);
  CHECK(k3(0, 1) == 0.0);
  CHECK(k3(1, 0) == 0.0);

  // nu of the kernel is exp(-eta * max cost) when the cost hits 0 somewhere
  SplitMix64 rng(67);
  Matrix cost = test_util::random_positive_matrix(5, 5, rng, 0.0, 8.0);
  cost(2, 2) = 0.0;
  double mx = 0.0;
  for (double x : cost.data()) mx = std::max(mx, x);
  Matrix k4 = build_kernel(cost, 1.0);
  CHECK(min_positive_entry(k4) / max_entry(k4) == Catch::Approx(std::exp(-mx)).epsilon(1e-12));

  Matrix all_inf(2, 2, kInf);
  CHECK_THROWS_AS(build_kernel(all_inf, 1.0), AllZeroKernelError);
}

TEST_CASE("prescale multiplies in the targets", "[eot]") {
  Matrix ones(2, 2, 1.0);
  Matrix scaled = prescale(ones, Marginals({0.9, 0.1}, {0.5, 0.5}));
  CHECK(scaled(0, 0) == Catch::Approx(0.45).margin(1e-16));
  CHECK(scaled(0, 1) == Catch::Approx(0.45).margin(1e-16));
  CHECK(scaled(1, 0) == Catch::Approx(0.05).margin(1e-16));
  CHECK(scaled(1, 1) == Catch::Approx(0.05).margin(1e-16));
}

TEST_CASE("uniform prescale leaves the trajectory unchanged", "[eot]") {
  SplitMix64 rng(71);
  Matrix kernel = test_util::random_positive_matrix(4, 4, rng);
  const Marginals uniform = Marginals::uniform(4, 4);
  auto plain = sk_run(ScalingInstance(kernel, uniform), 1e-11, 60);
  auto scaled = sk_run(ScalingInstance(prescale(kernel, uniform), uniform), 1e-11, 60);
  REQUIRE(plain.trace.rows.size() == scaled.trace.rows.size());
  for (std::size_t k = 0; k < plain.trace.rows.size(); ++k)
    CHECK(plain.trace.rows[k].total_err ==
          Catch::Approx(scaled.trace.rows[k].total_err).margin(1e-12));
}

TEST_CASE("logsumexp normalization basics", "[eot]") {
  Matrix logm(1, 2, 0.0);
  logsumexp_normalize(logm, Axis::Rows, {1.0});
  CHECK(logm(0, 0) == Catch::Approx(std::log(0.5)).margin(1e-15));
  CHECK(logm(0, 1) == Catch::Approx(std::log(0.5)).margin(1e-15));

  Matrix empty(2, 2, -kInf);
  empty(0, 0) = 0.0;
  empty(1, 0) = 0.0;
  CHECK_THROWS_AS(logsumexp_normalize(empty, Axis::Cols, {1.0, 1.0}), EmptySupportError);
}

TEST_CASE("log and direct engines agree after 50 steps", "[eot]") {
  SplitMix64 rng(73);
  for (int rep = 0; rep < 5; ++rep) {
    Matrix cost = test_util::random_positive_matrix(6, 6, rng, 0.0, 6.0);
    const Marginals targets = test_util::random_unit_targets(6, 6, rng);
    Matrix kernel = build_kernel(cost, 1.0);
    SkState direct = SkState::initial(ScalingInstance(kernel, targets));
    Matrix logk(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) logk(i, j) = -cost(i, j);
    auto log_run = log_sk_run(logk, targets, 1e-300, 50);
    for (std::size_t k = 0; k < 50; ++k) direct = sk_step(direct, targets);
    const Matrix from_log = exp_matrix(log_run.log_state);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        CHECK(from_log(i, j) == Catch::Approx(direct.current(i, j)).margin(1e-9));
  }
}

TEST_CASE("two-point symmetric problem has the closed-form plan", "[eot]") {
  EotProblem problem{Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}}), 1.0,
                     Marginals({0.5, 0.5}, {0.5, 0.5}), false};
  auto result = solve_eot(problem, 1e-13, 10000);
  REQUIRE(result.converged);
  const double e = std::exp(1.0);
  const double a = e / (2.0 * (1.0 + e));
  CHECK(result.plan(0, 0) == Catch::Approx(a).epsilon(1e-10));
  CHECK(result.plan(1, 1) == Catch::Approx(a).epsilon(1e-10));
  CHECK(result.plan(0, 1) == Catch::Approx(0.5 - a).epsilon(1e-10));
  CHECK(result.plan(0, 0) / result.plan(0, 1) == Catch::Approx(e).epsilon(1e-9));
}

TEST_CASE("zero cost with uniform targets returns the product measure", "[eot]") {
  EotProblem problem{Matrix(3, 4, 0.0), 1.0, Marginals::uniform(3, 4), false};
  auto result = solve_eot(problem, 1e-12, 50);
  REQUIRE(result.converged);
  CHECK(result.iterations <= 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(result.plan(i, j) == Catch::Approx(1.0 / 12.0).epsilon(1e-12));
}

TEST_CASE("factorization invariant holds for both engines", "[eot]") {
  SplitMix64 rng(79);
  for (Domain domain : {Domain::Direct, Domain::Log}) {
    Matrix cost = test_util::random_positive_matrix(5, 5, rng, 0.0, 5.0);
    const Marginals targets = test_util::random_unit_targets(5, 5, rng);
    for (bool pre : {false, true}) {
      EotProblem problem{cost, 1.3, targets, pre};
      auto result = solve_eot(problem, 1e-10, 5000, domain);
      REQUIRE(result.converged);
      const Matrix kernel = build_kernel(cost, 1.3);
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
          const double rebuilt = std::exp(result.potentials.f[i]) * kernel(i, j) *
                                 std::exp(result.potentials.g[j]);
          CHECK(rebuilt == Catch::Approx(result.plan(i, j)).epsilon(1e-8));
        }
    }
  }
}

TEST_CASE("prescale equivalence is bit-identical in the same engine", "[eot]") {
  SplitMix64 rng(83);
  Matrix cost = test_util::random_positive_matrix(5, 5, rng, 0.0, 4.0);
  const Marginals targets = test_util::random_unit_targets(5, 5, rng);
  EotProblem with_flag{cost, 1.0, targets, true};
  auto a = solve_eot(with_flag, 1e-9, 400, Domain::Direct);

  const Matrix manual = prescale(build_kernel(cost, 1.0), targets);
  auto b = sk_run(ScalingInstance(manual, targets), 1e-9, 400);
  REQUIRE(a.trace.rows.size() == b.trace.rows.size());
  std::stringstream csv_a, csv_b;
  a.trace.to_csv(csv_a);
  b.trace.to_csv(csv_b);
  CHECK(csv_a.str() == csv_b.str());
}

TEST_CASE("scalar invariance is exact in the log domain", "[eot]") {
  // dyadic log-kernel entries and a dyadic shift keep every float op exact,
  // so the trace must match bit for bit
  Matrix logk = Matrix::from_rows({{-0.5, -1.0, 0.0}, {0.0, -2.5, -1.5}, {-1.0, 0.0, -3.0}});
  const Marginals targets = Marginals::uniform(3, 3);
  auto base = log_sk_run(logk, targets, 1e-12, 80);
  Matrix shifted = logk;
  for (auto& x : shifted.data()) x += 3.0;  // kernel multiplied by e^3
  auto moved = log_sk_run(shifted, targets, 1e-12, 80);
  REQUIRE(base.trace.rows.size() == moved.trace.rows.size());
  std::stringstream csv_a, csv_b;
  base.trace.to_csv(csv_a);
  moved.trace.to_csv(csv_b);
  CHECK(csv_a.str() == csv_b.str());
  CHECK(base.log_state.data() == moved.log_state.data());
}

TEST_CASE("huge regularized costs break the direct engine but not the log one", "[eot]") {
  Matrix cost(3, 3, 0.5);
  cost(0, 0) = 1e4;  // kernel entry exp(-1e4) underflows to exact zero
  const Marginals targets = Marginals::uniform(3, 3);
  EotProblem problem{cost, 1.0, targets, false};

  auto forced_log = solve_eot(problem, 1e-8, 2000, Domain::Log);
  CHECK(forced_log.converged);
  CHECK(forced_log.domain_used == Domain::Log);

  auto autod = solve_eot(problem, 1e-8, 2000, Domain::Auto);
  CHECK(autod.converged);
  CHECK(autod.domain_used == Domain::Log);  // eta*max(C) > 30 routes to log
}

TEST_CASE("outlier magnitude leaves the log-domain iteration count unchanged", "[eot]") {
  SplitMix64 rng(89);
  Matrix base_cost = test_util::random_positive_matrix(6, 6, rng, 0.0, 2.0);
  const Marginals targets = Marginals::uniform(6, 6);
  std::vector<std::size_t> iterations;
  for (double outlier : {1e2, 1e4, 1e6}) {
    Matrix cost = base_cost;
    cost(0, 0) = outlier;
    EotProblem problem{cost, 1.0, targets, false};
    auto result = solve_eot(problem, 1e-6, 100000, Domain::Log);
    REQUIRE(result.converged);
    iterations.push_back(result.iterations);
  }
  CHECK(iterations[0] == iterations[1]);
  CHECK(iterations[1] == iterations[2]);
}
