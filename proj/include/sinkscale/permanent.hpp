#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sinkscale/matrix.hpp"

namespace sinkscale {

namespace detail {

// Ryser inclusion-exclusion with Gray-code column updates, O(2^n * n).
// Column subsets are visited in the standard reflected Gray order, so the
// result is deterministic. Rows are pre-scaled by their maxima to keep the
// partial products in range; the caller receives log(per) and a sign.
inline double ryser_log(const Matrix& a, double* log_row_scale) {
  const std::size_t n = a.rows();
  std::vector<double> scaled(n * n);
  double log_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = 0.0;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, std::abs(a(i, j)));
    if (mx == 0.0) {
      *log_row_scale = -std::numeric_limits<double>::infinity();
      return -std::numeric_limits<double>::infinity();  // zero row: permanent 0
    }
    log_scale += std::log(mx);
    for (std::size_t j = 0; j < n; ++j) scaled[i * n + j] = a(i, j) / mx;
  }
  *log_row_scale = log_scale;

  std::vector<double> rsum(n, 0.0);
  double acc = 0.0;
  const std::uint64_t total = std::uint64_t{1} << n;
  std::uint64_t gray = 0;
  for (std::uint64_t k = 1; k < total; ++k) {
    const std::uint64_t next_gray = k ^ (k >> 1);
    const std::uint64_t changed = gray ^ next_gray;
    const int j = std::countr_zero(changed);
    const double sgn = (next_gray & changed) ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) rsum[i] += sgn * scaled[i * n + j];
    gray = next_gray;
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) prod *= rsum[i];
    acc += (std::popcount(gray) % 2 == 0) ? prod : -prod;
  }
  const double value = (n % 2 == 0) ? acc : -acc;
  // Nonnegative input implies a nonnegative permanent; tiny negative values
  // are rounding noise.
  if (value <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(value);
}

}  // namespace detail

// Exact permanent of a square matrix with n <= 20.
inline double permanent(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInputError("permanent: matrix must be square");
  if (a.rows() > 20)
    throw TooLargeError("permanent: n = " + std::to_string(a.rows()) + " exceeds the n <= 20 cap");
  double log_scale = 0.0;
  const double lp = detail::ryser_log(a, &log_scale);
  if (lp == -std::numeric_limits<double>::infinity()) return 0.0;
  return std::exp(lp + log_scale);
}

// log(per(A)); stays meaningful where the plain value would underflow.
inline double permanent_log(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidInputError("permanent_log: matrix must be square");
  if (a.rows() > 20)
    throw TooLargeError("permanent_log: n = " + std::to_string(a.rows()) +
                        " exceeds the n <= 20 cap");
  double log_scale = 0.0;
  const double lp = detail::ryser_log(a, &log_scale);
  return lp + log_scale;
}

}  // namespace sinkscale
