#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "relex/tensor.hpp"

namespace relex {

struct GradCheckResult {
  bool ok = true;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares the gradients already stored in `params` against central finite
// differences of `loss_fn`. loss_fn must recompute the forward loss from the
// parameters' current data (no recording needed). The relative error uses a
// small denominator floor so that zero-gradient coordinates are judged by
// absolute difference.
GradCheckResult finite_difference_check(
    const std::function<double()>& loss_fn,
    const std::vector<std::pair<std::string, Tensor>>& params, double h, double tolerance);

}  // namespace relex
