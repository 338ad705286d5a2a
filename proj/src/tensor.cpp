#include "a2os2a/tensor.hpp"

#include <sstream>

namespace a2os2a {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

template <typename R>
void Tape<R>::backward(const Tensor<R>& loss) {
  if (consumed_) throw StateError("backward called twice on the same tape without reset()");
  if (loss.numel() != 1) {
    throw RankError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;  // constant graph: leaves keep zero gradients

  auto& root = *loss.node();
  root.ensure_grad();
  root.grad[0] += R(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node<R>& node = **it;
    if (node.grad.empty() || !node.backward) continue;
    node.backward(node);
    // Intermediate gradients are dead once propagated.
    std::vector<R>().swap(node.grad);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace a2os2a
