#include "relex/finite_diff.hpp"

#include <algorithm>
#include <cmath>

namespace relex {

GradCheckResult finite_difference_check(
    const std::function<double()>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params, double h, double tolerance) {
  GradCheckResult result;
  for (const auto& [name, param] : params) {
    if (!param.requires_grad()) continue;
    Tensor p = param;  // handle alias; perturbations act on live storage
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double original = p.data()[i];
      p.data()[i] = original + h;
      const double f_plus = loss_fn();
      p.data()[i] = original - h;
      const double f_minus = loss_fn();
      p.data()[i] = original;

      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double analytic = p.grad()[i];
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-2});
      const double rel = std::fabs(numeric - analytic) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  result.ok = result.max_rel_err < tolerance;
  return result;
}

}  // namespace relex
