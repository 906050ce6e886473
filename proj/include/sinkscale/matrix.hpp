#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sinkscale/errors.hpp"

namespace sinkscale {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense row-major matrix of doubles. Also used to hold log-domain states, so
// the container itself places no sign restrictions on entries; validation
// happens where a nonnegative scaling input is required (ScalingInstance).
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw InvalidInputError("matrix dimensions must be positive");
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw InvalidInputError("matrix must have at least one row");
    const std::size_t n = rows.begin()->size();
    Matrix m(rows.size(), n);
    std::size_t i = 0;
    for (const auto& r : rows) {
      if (r.size() != n) throw InvalidInputError("ragged initializer for matrix");
      std::size_t j = 0;
      for (double x : r) m(i, j++) = x;
      ++i;
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Row sums in fixed left-to-right order; the default path never reassociates
// so repeated runs produce bit-identical traces.
inline std::vector<double> row_sums(const Matrix& m) {
  std::vector<double> r(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j);
    r[i] = s;
  }
  return r;
}

inline std::vector<double> col_sums(const Matrix& m) {
  std::vector<double> c(m.cols(), 0.0);
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, j);
    c[j] = s;
  }
  return c;
}

inline double min_entry(const Matrix& m) {
  return *std::min_element(m.data().begin(), m.data().end());
}

inline double max_entry(const Matrix& m) {
  return *std::max_element(m.data().begin(), m.data().end());
}

// Smallest strictly positive entry; throws if none exists.
inline double min_positive_entry(const Matrix& m) {
  double best = std::numeric_limits<double>::infinity();
  for (double x : m.data())
    if (x > 0.0 && x < best) best = x;
  if (!std::isfinite(best)) throw InvalidInputError("matrix has no positive entry");
  return best;
}

inline bool all_finite(const Matrix& m) {
  for (double x : m.data())
    if (!std::isfinite(x)) return false;
  return true;
}

// Target marginals for a scaling instance. Entries must be strictly positive
// and the two mass totals balanced to 1e-12 relative.
struct Marginals {
  std::vector<double> u;
  std::vector<double> v;

  Marginals() = default;
  Marginals(std::vector<double> u_, std::vector<double> v_) : u(std::move(u_)), v(std::move(v_)) {
    validate();
  }

  static Marginals ones(std::size_t n) {
    return Marginals(std::vector<double>(n, 1.0), std::vector<double>(n, 1.0));
  }

  static Marginals uniform(std::size_t m, std::size_t n) {
    return Marginals(std::vector<double>(m, 1.0 / static_cast<double>(m)),
                     std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  double mass() const {
    double s = 0.0;
    for (double x : u) s += x;
    return s;
  }

  void validate() const {
    if (u.empty() || v.empty()) throw InvalidInputError("marginals must be nonempty");
    for (double x : u)
      if (!(x > 0.0) || !std::isfinite(x))
        throw InvalidInputError("row targets must be strictly positive");
    for (double x : v)
      if (!(x > 0.0) || !std::isfinite(x))
        throw InvalidInputError("column targets must be strictly positive");
    double su = 0.0, sv = 0.0;
    for (double x : u) su += x;
    for (double x : v) sv += x;
    if (std::abs(su - sv) > 1e-12 * su)
      throw InvalidInputError("unbalanced targets: ||u||_1 = " + std::to_string(su) +
                              " vs ||v||_1 = " + std::to_string(sv));
  }
};

// A nonnegative matrix together with balanced positive targets. Zero rows or
// columns are rejected here: the Sinkhorn update would divide by zero.
struct ScalingInstance {
  Matrix matrix;
  Marginals targets;

  ScalingInstance() = default;
  ScalingInstance(Matrix m, Marginals t) : matrix(std::move(m)), targets(std::move(t)) {
    validate();
  }

  void validate() const {
    targets.validate();
    if (matrix.rows() != targets.u.size() || matrix.cols() != targets.v.size())
      throw InvalidInputError("matrix dimensions do not match target lengths");
    bool any_positive = false;
    for (double x : matrix.data()) {
      if (!(x >= 0.0)) throw InvalidInputError("scaling input must be entrywise nonnegative");
      if (x > 0.0) any_positive = true;
    }
    if (!any_positive) throw InvalidInputError("scaling input must be a nonzero matrix");
    const auto r = row_sums(matrix);
    for (std::size_t i = 0; i < r.size(); ++i)
      if (!(r[i] > 0.0))
        throw InvalidInputError("row " + std::to_string(i + 1) +
                                " has no positive entry; Sinkhorn iteration is undefined");
    const auto c = col_sums(matrix);
    for (std::size_t j = 0; j < c.size(); ++j)
      if (!(c[j] > 0.0))
        throw InvalidInputError("column " + std::to_string(j + 1) +
                                " has no positive entry; Sinkhorn iteration is undefined");
  }
};

}  // namespace sinkscale
