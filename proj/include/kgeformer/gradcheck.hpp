#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "kgeformer/parameters.hpp"
#include "kgeformer/tensor.hpp"

namespace kgeformer {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

// Compares analytic grads of `loss` (called under an active tape) against
// central differences (f(p + eps) - f(p - eps)) / 2eps for every scalar of every
// parameter. Relative error is |a - n| / max(|a|, |n|, 1e-8). Raises a contract
// error when two evaluations at the same point disagree, e.g. active dropout.
GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& loss, ParameterSet<double>& params,
                                  double eps = 1e-4);

}  // namespace kgeformer
