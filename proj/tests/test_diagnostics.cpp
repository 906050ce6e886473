#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sinkscale/diagnostics.hpp"
#include "sinkscale/eot.hpp"
#include "sinkscale/instance_gen.hpp"
#include "test_util.hpp"

using namespace sinkscale;

TEST_CASE("density of the dense tightness family", "[diagnostics]") {
  auto gen = gen_thm71(10);
  auto rep = density(gen.instance.matrix, gen.instance.targets, 1.0);
  CHECK(rep.gamma == Catch::Approx(0.6).margin(1e-12));
  CHECK(rep.gamma_prime == Catch::Approx(0.5).margin(1e-12));
  CHECK(rep.is_dense);
}

TEST_CASE("density hand examples", "[diagnostics]") {
  CHECK(density(Matrix(3, 3, 1.0), Marginals::uniform(3, 3), 0.5).gamma == 1.0);
  CHECK(density(Matrix(3, 3, 1.0), Marginals::uniform(3, 3), 0.5).gamma_prime == 1.0);

  auto rep = density(Matrix::from_rows({{1.0, 0.5}, {0.5, 1.0}}), Marginals({0.5, 0.5}, {0.5, 0.5}),
                     0.6);
  CHECK(rep.gamma == Catch::Approx(0.5).margin(1e-15));
  CHECK(rep.gamma_prime == Catch::Approx(0.5).margin(1e-15));
  CHECK_FALSE(rep.is_dense);
}

TEST_CASE("density is invariant under global rescaling", "[diagnostics]") {
  SplitMix64 rng(43);
  Matrix m = test_util::random_positive_matrix(5, 6, rng);
  auto targets = test_util::random_unit_targets(5, 6, rng);
  for (double c : {1e-7, 3.0, 1e9}) {
    Matrix scaled = m;
    for (auto& x : scaled.data()) x *= c;
    auto base = density(m, targets, 0.4);
    auto got = density(scaled, targets, 0.4);
    CHECK(got.gamma == base.gamma);
    CHECK(got.gamma_prime == base.gamma_prime);
  }
}

TEST_CASE("best rho scan", "[diagnostics]") {
  auto ones = best_rho(Matrix(3, 3, 1.0), Marginals::uniform(3, 3));
  CHECK(ones.gamma + ones.gamma_prime == Catch::Approx(2.0).margin(1e-12));

  auto gen = gen_thm71(10);
  auto t71 = best_rho(gen.instance.matrix, gen.instance.targets);
  CHECK(t71.gamma + t71.gamma_prime == Catch::Approx(1.1).margin(1e-12));

  const double eps0 = 1e-6;
  auto diag = best_rho(Matrix::from_rows({{1.0, eps0}, {eps0, 1.0}}),
                       Marginals({0.5, 0.5}, {0.5, 0.5}));
  CHECK(diag.gamma + diag.gamma_prime == Catch::Approx(2.0).margin(1e-12));
  CHECK(diag.rho < eps0);
  CHECK(density(Matrix::from_rows({{1.0, eps0}, {eps0, 1.0}}), Marginals({0.5, 0.5}, {0.5, 0.5}),
                1.0 - 1e-9)
            .gamma == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("well-boundedness bulk capacities", "[diagnostics]") {
  // everything below rho
  auto all = well_bounded(Matrix(3, 4, 0.5), Marginals::uniform(3, 4), 1.0);
  CHECK(all.r_rho == 1.0);
  CHECK(all.c_rho == 1.0);
  CHECK(all.kappa_margin == Catch::Approx(1.0).margin(1e-15));

  // one huge outlier in a uniform 4x4
  Matrix cost(4, 4, 0.3);
  cost(0, 0) = 1e6;
  auto rep = well_bounded(cost, Marginals::uniform(4, 4), 2.0);
  CHECK(rep.r_rho == Catch::Approx(0.75).margin(1e-15));
  CHECK(rep.c_rho == Catch::Approx(0.75).margin(1e-15));
  CHECK(rep.kappa_margin == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("sufficient condition implies the margin", "[diagnostics]") {
  SplitMix64 rng(47);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix cost = test_util::random_positive_matrix(5, 5, rng, 0.0, 3.0);
    auto targets = test_util::random_unit_targets(5, 5, rng);
    auto wb = well_bounded(cost, targets, rng.next_in(0.5, 2.5));
    for (double kappa : {0.1, 0.3, 0.7}) {
      if (wb.r_rho >= (1.0 + kappa) / 2.0 && wb.c_rho >= (1.0 + kappa) / 2.0)
        CHECK(wb.kappa_margin >= kappa - 1e-15);
    }
  }
}

TEST_CASE("density and well-boundedness agree through the Gibbs kernel", "[diagnostics]") {
  SplitMix64 rng(53);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix cost = test_util::random_positive_matrix(6, 6, rng, 0.0, 4.0);
    cost(rng.next_index(6), rng.next_index(6)) = 0.0;  // pins max kernel entry at 1
    auto targets = test_util::random_unit_targets(6, 6, rng);
    const double rho = rng.next_in(0.5, 3.0);
    Matrix kernel = build_kernel(cost, 1.0);
    auto wb = well_bounded(cost, targets, rho);
    auto dens = density(kernel, targets, std::exp(-rho) - 1e-15);
    CHECK(dens.gamma == Catch::Approx(wb.r_rho).margin(1e-14));
    CHECK(dens.gamma_prime == Catch::Approx(wb.c_rho).margin(1e-14));
  }
}

TEST_CASE("scalability verdicts", "[diagnostics]") {
  SplitMix64 rng(59);
  ScalingInstance positive(test_util::random_positive_matrix(4, 5, rng),
                           test_util::random_unit_targets(4, 5, rng));
  CHECK(scalability_check(positive).feasible());

  ScalingInstance blocked(Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}}),
                          Marginals({0.9, 0.1}, {0.1, 0.9}));
  auto rep = scalability_check(blocked);
  CHECK_FALSE(rep.feasible());
  CHECK(rep.flow_value == Catch::Approx(0.2).margin(1e-12));
  CHECK(rep.cut_rows == std::vector<std::size_t>{0});
  CHECK(rep.cut_cols == std::vector<std::size_t>{1});

  auto t71 = gen_thm71(10);
  CHECK(scalability_check(t71.instance).feasible());
}

TEST_CASE("the aggregate report collects all four diagnostics", "[diagnostics]") {
  auto gen = gen_thm71(10);
  auto report = diagnose(gen.instance, 1.0);
  CHECK(report.nu == Catch::Approx(nu(gen.instance.matrix)));
  CHECK(report.density.gamma + report.density.gamma_prime == Catch::Approx(1.1).margin(1e-12));
  CHECK(report.well_bounded.rho == 1.0);
  CHECK(report.scalability.feasible());
}

TEST_CASE("feasibility is necessary for convergence", "[diagnostics]") {
  SplitMix64 rng(61);
  for (int rep = 0; rep < 5; ++rep) {
    RandomSpec spec;
    spec.m = spec.n = 6;
    spec.seed = rng.next();
    auto gen = gen_random(spec);
    auto run = sk_run(gen.instance, 1e-6, 5000);
    if (run.converged) CHECK(scalability_check(gen.instance).feasible());
  }
  auto crit = gen_critical2x2(0.5, 0.1);
  auto run = sk_run(crit.instance, 1e-6, 2000000);
  if (run.converged) CHECK(scalability_check(crit.instance).feasible());
}
