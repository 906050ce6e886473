#pragma once

#include <cstdint>
#include <vector>

#include "sinkscale/instance_gen.hpp"
#include "sinkscale/matrix.hpp"

namespace test_util {

// Strictly positive random matrix with entries in [lo, hi).
inline sinkscale::Matrix random_positive_matrix(std::size_t m, std::size_t n,
                                                sinkscale::SplitMix64& rng, double lo = 0.1,
                                                double hi = 1.0) {
  sinkscale::Matrix a(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = rng.next_in(lo, hi);
  return a;
}

inline std::vector<double> random_positive_vector(std::size_t n, sinkscale::SplitMix64& rng,
                                                  double lo = 0.5, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.next_in(lo, hi);
  return v;
}

// Random positive targets with both sides normalized to unit mass.
inline sinkscale::Marginals random_unit_targets(std::size_t m, std::size_t n,
                                                sinkscale::SplitMix64& rng) {
  auto u = random_positive_vector(m, rng);
  auto v = random_positive_vector(n, rng);
  double su = 0.0, sv = 0.0;
  for (double x : u) su += x;
  for (double x : v) sv += x;
  for (auto& x : u) x /= su;
  for (auto& x : v) x /= sv;
  // Remove the last rounding wiggle so the balance check is comfortable.
  double du = 0.0, dv = 0.0;
  for (double x : u) du += x;
  for (double x : v) dv += x;
  u.back() += 1.0 - du;
  v.back() += 1.0 - dv;
  return sinkscale::Marginals(u, v);
}

}  // namespace test_util
