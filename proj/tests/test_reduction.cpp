#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sinkscale/reduction.hpp"
#include "test_util.hpp"

using namespace sinkscale;

TEST_CASE("discretization hand examples", "[reduction]") {
  auto a = discretize(Marginals({0.3, 0.7}, {0.5, 0.5}), 10);
  CHECK(a.u_prime == std::vector<long long>{3, 7});
  CHECK(a.v_prime == std::vector<long long>{5, 5});
  CHECK(a.t_shift == 0);
  CHECK(a.R == 3);

  auto b = discretize(Marginals({0.35, 0.65}, {0.6, 0.4}), 10);
  CHECK(b.t_shift == -1);
  CHECK(b.u_prime == std::vector<long long>{4, 6});
  CHECK(b.v_prime == std::vector<long long>{6, 4});
  CHECK(b.R == 3);

  // integral L*u and L*v discretize with no correction at all
  auto c = discretize(Marginals({0.25, 0.75}, {0.5, 0.5}), 4);
  CHECK(c.u_prime == std::vector<long long>{1, 3});
  CHECK(c.v_prime == std::vector<long long>{2, 2});
  CHECK(c.t_shift == 0);

  CHECK_THROWS_AS(discretize(Marginals({0.01, 0.99}, {0.5, 0.5}), 10), LTooSmallError);
}

TEST_CASE("auto lcd", "[reduction]") {
  auto lcd = auto_lcd(Marginals({1.0 / 3.0, 2.0 / 3.0}, {0.5, 0.5}));
  REQUIRE(lcd.has_value());
  CHECK(*lcd == 6);
  CHECK_FALSE(auto_lcd(Marginals({1.0 / std::sqrt(2.0), 1.0 - 1.0 / std::sqrt(2.0)}, {0.5, 0.5}),
                       100000)
                   .has_value());
}

TEST_CASE("expansion produces the block-constant subdivision", "[reduction]") {
  ScalingInstance inst(Matrix::from_rows({{2.0, 4.0}, {6.0, 8.0}}),
                       Marginals({1.0, 2.0}, {2.0, 1.0}));
  IntegerTargets ti;
  ti.u_prime = {1, 2};
  ti.v_prime = {2, 1};
  ti.L = 3;
  ti.R = 1;
  auto red = expand(inst, ti);
  REQUIRE(red.G.rows() == 3);
  const Matrix expected =
      Matrix::from_rows({{1.0, 1.0, 4.0}, {1.5, 1.5, 4.0}, {1.5, 1.5, 4.0}});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(red.G(i, j) == expected(i, j));

  // block sums recover the source entries exactly
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double sum = 0.0;
      for (std::size_t ii = red.row_blocks[i].first; ii < red.row_blocks[i].second; ++ii)
        for (std::size_t jj = red.col_blocks[j].first; jj < red.col_blocks[j].second; ++jj)
          sum += red.G(ii, jj);
      CHECK(sum == Catch::Approx(inst.matrix(i, j)).epsilon(1e-15));
    }

  const Matrix d = recover_dense(red);
  const Matrix want = Matrix::from_rows({{2.0, 2.0, 4.0}, {6.0, 6.0, 8.0}, {6.0, 6.0, 8.0}});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(d(i, j) == want(i, j));
}

TEST_CASE("all-ones integer targets leave the matrix unchanged", "[reduction]") {
  SplitMix64 rng(97);
  Matrix m = test_util::random_positive_matrix(3, 3, rng);
  ScalingInstance inst(m, Marginals::uniform(3, 3));
  IntegerTargets ti;
  ti.u_prime = {1, 1, 1};
  ti.v_prime = {1, 1, 1};
  ti.L = 3;
  ti.R = 1;
  auto red = expand(inst, ti);
  CHECK(red.G.data() == m.data());
  CHECK(recover_dense(red).data() == m.data());
}

TEST_CASE("memory guard", "[reduction]") {
  ScalingInstance inst(Matrix(2, 2, 1.0), Marginals({0.5, 0.5}, {0.5, 0.5}));
  auto ti = discretize(inst.targets, 60000);
  CHECK_THROWS_AS(expand(inst, ti), TooLargeError);
}

TEST_CASE("density transfers through dense recovery", "[reduction]") {
  SplitMix64 rng(101);
  Matrix a = test_util::random_positive_matrix(3, 4, rng);
  Marginals targets({0.25, 0.25, 0.5}, {0.25, 0.25, 0.25, 0.25});
  ScalingInstance inst(a, targets);
  auto ti = discretize(targets, 8);
  auto red = expand(inst, ti);
  // density audited against the integer targets on A transfers to (1,1) on D
  Marginals int_targets(std::vector<double>(ti.u_prime.begin(), ti.u_prime.end()),
                        std::vector<double>(ti.v_prime.begin(), ti.v_prime.end()));
  auto before = density(a, int_targets, 0.5);
  auto after = density(recover_dense(red), Marginals::ones(red.G.rows()), 0.5);
  CHECK(after.gamma == Catch::Approx(before.gamma).margin(1e-12));
  CHECK(after.gamma_prime == Catch::Approx(before.gamma_prime).margin(1e-12));
}

TEST_CASE("equivalence verifier on the exact branch", "[reduction]") {
  SplitMix64 rng(103);
  ScalingInstance inst(test_util::random_positive_matrix(2, 2, rng),
                       Marginals({0.3, 0.7}, {0.5, 0.5}));
  auto rep = verify_equivalence(inst, 10, 40);
  CHECK(rep.exact_branch);
  CHECK(rep.max_deviation <= 1e-9);
  for (double s : rep.slack) CHECK(s == 0.0);
}

TEST_CASE("unit integer targets give deviation zero", "[reduction]") {
  SplitMix64 rng(107);
  ScalingInstance inst(test_util::random_positive_matrix(3, 3, rng), Marginals::uniform(3, 3));
  auto rep = verify_equivalence(inst, 3, 30);
  CHECK(rep.max_deviation <= 1e-12);
}

TEST_CASE("larger L tightens the non-integral approximation", "[reduction]") {
  SplitMix64 rng(109);
  Matrix m = test_util::random_positive_matrix(2, 2, rng, 0.5, 1.0);
  // targets with a large denominator so small L rounds coarsely
  Marginals targets({1.0 / 3.0 + 0.011, 2.0 / 3.0 - 0.011}, {0.5, 0.5});
  ScalingInstance inst(m, targets);
  const std::size_t steps = 12;
  auto coarse = verify_equivalence(inst, 9, steps);
  auto fine = verify_equivalence(inst, 2000, steps, true);
  CHECK_FALSE(coarse.exact_branch);
  CHECK(fine.max_deviation < coarse.max_deviation);
  CHECK(fine.slack[0] > 0.0);
  // the measured deviation must sit inside the theoretical slack per step
  for (std::size_t k = 0; k < steps; ++k) {
    CHECK(coarse.deviation[k] <= coarse.slack[k]);
    CHECK(fine.deviation[k] <= fine.slack[k]);
  }
}

TEST_CASE("two-step closed form hand example", "[reduction]") {
  const std::vector<double> v(4, 1.0);
  auto vals = block_closed_form(4, 1, 2, 0.5, v);
  CHECK(vals.x == Catch::Approx(5.0 / 16.0).margin(1e-15));
  CHECK(vals.y == Catch::Approx(3.0 / 16.0).margin(1e-15));
  CHECK(vals.z == Catch::Approx(5.0 / 22.0).margin(1e-15));
  CHECK(vals.q == Catch::Approx(3.0 / 11.0).margin(1e-15));
}

TEST_CASE("uniform blocks collapse to the flat fixed point", "[reduction]") {
  SplitMix64 rng(113);
  const std::size_t n = 6;
  auto v = test_util::random_positive_vector(n, rng);
  auto vals = block_closed_form(n, 2, 4, 1.0, v);
  CHECK(vals.x == Catch::Approx(1.0 / 6.0).margin(1e-15));
  CHECK(vals.y == Catch::Approx(1.0 / 6.0).margin(1e-15));
  CHECK(vals.z == Catch::Approx(1.0 / 6.0).margin(1e-15));
  CHECK(vals.q == Catch::Approx(1.0 / 6.0).margin(1e-15));
}

TEST_CASE("closed form matches a two-step simulation", "[reduction]") {
  SplitMix64 rng(127);
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t n = 5 + rng.next_index(8);
    const std::size_t t = 1 + rng.next_index(n - 2);
    const std::size_t s = t + 1 + rng.next_index(n - t - 1);
    const double d = rng.next_in(0.05, 1.0);
    const auto u = test_util::random_positive_vector(n, rng);
    const auto v = test_util::random_positive_vector(n, rng);
    Matrix a = make_block_matrix(n, t, s, d, u, v);
    const auto states = sk_collect_states(ScalingInstance(a, Marginals::ones(n)), 3);
    const Matrix& a2 = states[2];
    const auto vals = block_closed_form(n, t, s, d, v);
    CHECK(a2(0, 0) == Catch::Approx(vals.x).margin(1e-12));
    CHECK(a2(0, s) == Catch::Approx(vals.y).margin(1e-12));
    CHECK(a2(t, 0) == Catch::Approx(vals.z).margin(1e-12));
    CHECK(a2(t, s) == Catch::Approx(vals.q).margin(1e-12));
  }
}

TEST_CASE("block constancy along the reduced run", "[reduction]") {
  SplitMix64 rng(131);
  ScalingInstance inst(test_util::random_positive_matrix(3, 3, rng),
                       Marginals({0.2, 0.3, 0.5}, {0.4, 0.4, 0.2}));
  auto ti = discretize(inst.targets, 10);
  auto red = expand(inst, ti);
  auto states = sk_collect_states(ScalingInstance(red.G, Marginals::ones(red.G.rows())), 30);

  // the (u', v')-scaling run on the source matrix, stepped in lockstep
  Marginals int_targets(std::vector<double>(ti.u_prime.begin(), ti.u_prime.end()),
                        std::vector<double>(ti.v_prime.begin(), ti.v_prime.end()));
  ScalingInstance int_inst(inst.matrix, int_targets);
  auto int_states = sk_collect_states(int_inst, 30);

  for (std::size_t k = 0; k < states.size(); ++k) {
    const Matrix& state = states[k];
    for (std::size_t i = 0; i < red.row_blocks.size(); ++i)
      for (std::size_t j = 0; j < red.col_blocks.size(); ++j) {
        double lo = kInf, hi = -kInf, sum = 0.0;
        for (std::size_t ii = red.row_blocks[i].first; ii < red.row_blocks[i].second; ++ii)
          for (std::size_t jj = red.col_blocks[j].first; jj < red.col_blocks[j].second; ++jj) {
            lo = std::min(lo, state(ii, jj));
            hi = std::max(hi, state(ii, jj));
            sum += state(ii, jj);
          }
        CHECK(hi - lo <= 1e-12 * std::max(std::abs(hi), 1e-300));
        // block sums reproduce the integer-target iterate entry for entry
        CHECK(sum == Catch::Approx(int_states[k](i, j)).epsilon(1e-12));
      }
  }
}

TEST_CASE("recovery ratio diagnostic has the theorem shape", "[reduction]") {
  SplitMix64 rng(137);
  Matrix a = test_util::random_positive_matrix(3, 3, rng, 0.4, 1.0);
  Marginals targets({0.2, 0.3, 0.5}, {0.4, 0.4, 0.2});
  ScalingInstance inst(a, targets);
  auto dens = best_rho(a, targets);
  auto red = expand(inst, discretize(targets, 200));
  auto ratio = recovery_ratio(red, dens);
  CHECK(ratio.measured_min > 0.0);
  CHECK(ratio.bound > 0.0);
  CHECK(ratio.measured_min >= ratio.bound);  // L = 200 is deep in the asymptotic regime here
}
