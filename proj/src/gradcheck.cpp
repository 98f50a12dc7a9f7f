#include "kgeformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace kgeformer {

GradCheckResult finite_diff_check(const std::function<Tensor<double>()>& loss, ParameterSet<double>& params,
                                  double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::config, "finite_diff_check eps must be positive");
  params.zero_grad();
  double f0 = 0.0;
  {
    Tape<double> tape;
    typename Tape<double>::Recording recording(tape);
    const Tensor<double> l = loss();
    f0 = l.item();
    backward(l, tape);
  }
  const double f1 = loss().item();
  if (f0 != f1) {
    fail(ErrorKind::contract, "finite_diff_check: loss is not deterministic (dropout enabled?)");
  }

  GradCheckResult result;
  for (auto& [name, tensor] : params.entries()) {
    auto values = tensor.mutable_data();
    const auto grad = tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss().item();
      values[i] = saved - eps;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grad.empty() ? 0.0 : grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_parameter = name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace kgeformer
