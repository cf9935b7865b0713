#pragma once

#include <cstdint>
#include <vector>

#include "relex/tensor.hpp"

namespace relex {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers are kept
// per parameter, in list order, so a given (params, grads, state) triple
// always produces the same bytes.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // One update from the gradients currently stored in the parameters.
  // Throws TrainingError on a non-finite gradient.
  void step();
  void zero_grad();
  std::int64_t step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig config_;
  std::int64_t t_ = 0;
};

}  // namespace relex
