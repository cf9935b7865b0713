#include "relex/tensor.hpp"

#include <numeric>
#include <sstream>

#include "relex/errors.hpp"

namespace relex {

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

static std::size_t checked_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  std::size_t n = checked_numel(shape);
  t.s_->shape = std::move(shape);
  t.s_->data.assign(n, 0.0);
  t.s_->requires_grad = requires_grad;
  if (requires_grad) t.s_->grad.assign(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& x : t.data()) x = value;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
  std::size_t n = checked_numel(shape);
  if (n != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->data = std::move(data);
  t.s_->requires_grad = requires_grad;
  if (requires_grad) t.s_->grad.assign(n, 0.0);
  return t;
}

void Tensor::set_requires_grad(bool requires_grad) const {
  s_->requires_grad = requires_grad;
  if (requires_grad) {
    s_->grad.assign(s_->data.size(), 0.0);
  } else {
    s_->grad.clear();
    s_->grad.shrink_to_fit();
  }
}

std::vector<double>& Tensor::grad() const {
  if (!s_->requires_grad) throw Error("tensor does not track gradients");
  return s_->grad;
}

void Tensor::zero_grad() const {
  if (s_->requires_grad) s_->grad.assign(s_->data.size(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str());
  return s_->data[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.s_ = std::make_shared<Storage>(*s_);
  return t;
}

}  // namespace relex
