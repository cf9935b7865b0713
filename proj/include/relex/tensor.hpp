#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace relex {

std::string shape_to_string(const std::vector<int>& shape);

// Dense row-major 64-bit tensor. A Tensor is a shared handle: copying it
// aliases the same storage and gradient buffer, which is what lets tape
// closures and optimizer state refer to the live parameter. Like a
// shared_ptr, a const Tensor is a const handle to mutable storage; use
// clone() when an independent copy is needed.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const std::vector<int>& shape() const { return s_->shape; }
  int rank() const { return static_cast<int>(s_->shape.size()); }
  int dim(int i) const { return s_->shape[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return s_->data.size(); }

  std::vector<double>& data() const { return s_->data; }

  bool requires_grad() const { return s_->requires_grad; }
  // Turning grad on allocates a zeroed buffer; turning it off drops it.
  void set_requires_grad(bool requires_grad) const;
  std::vector<double>& grad() const;
  void zero_grad() const;

  double& at(int i) const { return s_->data[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) const {
    return s_->data[static_cast<std::size_t>(i) * s_->shape[1] + j];
  }

  // Value of a size-1 tensor.
  double item() const;

  Tensor clone() const;
  std::string shape_str() const { return shape_to_string(s_->shape); }

  // Identity of the underlying storage; used to dedupe parameter lists.
  const void* storage_id() const { return s_.get(); }

 private:
  struct Storage {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

}  // namespace relex
