#include "relex/tape.hpp"

#include "relex/errors.hpp"

namespace relex {

void Tape::backward(Tensor& loss) {
  if (!recording_) throw Error("backward() on a non-recording tape");
  if (used_) throw Error("backward() called twice on one tape");
  if (loss.size() != 1) throw ShapeError("backward() expects a scalar loss, got " + loss.shape_str());
  if (!loss.requires_grad()) throw Error("loss does not depend on any tracked parameter");
  used_ = true;
  loss.grad()[0] += 1.0;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

}  // namespace relex
