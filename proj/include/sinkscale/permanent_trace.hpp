#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sinkscale/permanent.hpp"
#include "sinkscale/sk.hpp"

namespace sinkscale {

// Permanent growth along a (1,1)-scaling run. At even steps the matrix is
// row-normalized and the next column normalization divides the permanent by
// the product of the column sums; at odd steps the roles swap. The trace
// stores that product and the implied prediction for the next permanent.
struct PermanentTraceRow {
  std::size_t iter = 0;
  double permanent = 0.0;
  double log_permanent = 0.0;
  double marginal_product = 0.0;  // product of the non-normalized marginal sums
  double predicted_next = 0.0;    // permanent / marginal_product
};

struct PermanentTrace {
  std::vector<PermanentTraceRow> rows;
  std::size_t law_violations = 0;  // steps where the update law missed 1e-8 relative
};

inline PermanentTrace permanent_trace(const ScalingInstance& instance, std::size_t steps) {
  const Matrix& a = instance.matrix;
  if (a.rows() != a.cols()) throw InvalidInputError("permanent_trace: matrix must be square");
  if (a.rows() > 12)
    throw TooLargeError("permanent_trace: n = " + std::to_string(a.rows()) +
                        " exceeds the n <= 12 cap");
  PermanentTrace out;
  SkState state = SkState::initial(instance);
  for (std::size_t k = 0; k < steps; ++k) {
    detail::sk_step_inplace(state, instance.targets);
    PermanentTraceRow row;
    row.iter = k;
    row.permanent = permanent(state.current);
    row.log_permanent = permanent_log(state.current);
    const bool even = (k % 2 == 0);
    const auto sums = even ? col_sums(state.current) : row_sums(state.current);
    double prod = 1.0;
    for (double s : sums) prod *= s;
    row.marginal_product = prod;
    row.predicted_next = row.permanent / prod;
    if (!out.rows.empty()) {
      const auto& prev = out.rows.back();
      const double err = std::abs(row.permanent - prev.predicted_next);
      if (err > 1e-8 * std::abs(row.permanent)) ++out.law_violations;
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace sinkscale
