#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "relex/tensor.hpp"

namespace relex {

// Records the backward rule of every differentiable op in execution order.
// Since an op's inputs always exist before its output, replaying the rules
// in reverse is a valid reverse-topological sweep, and each rule runs exactly
// once per backward pass.
//
// A non-recording tape (eval mode) makes every op a plain forward computation.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t num_ops() const { return rules_.size(); }

  void record(std::function<void()> backward_rule) {
    if (recording_) rules_.push_back(std::move(backward_rule));
  }

  // Seeds d(loss)/d(loss) = 1 and replays all recorded rules in reverse.
  // One backward pass per tape.
  void backward(Tensor& loss);

 private:
  std::vector<std::function<void()>> rules_;
  bool recording_;
  bool used_ = false;
};

}  // namespace relex
