#include "maf/tape.hpp"

#include <stdexcept>

namespace maf {

Tensor Tape::watch(Tensor& param) {
  auto it = watched_.find(&param);
  int id;
  if (it != watched_.end()) {
    id = it->second;
  } else {
    Node n;
    n.size = param.numel();
    id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    watched_.emplace(&param, id);
    param.requires_grad = true;
  }
  Tensor handle = param;
  handle.node = id;
  handle.requires_grad = true;
  return handle;
}

int Tape::emit(const Tensor& out, std::vector<int> inputs, BackwardFn fn) {
  Node n;
  n.inputs = std::move(inputs);
  n.size = out.numel();
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape));
  }
  if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("backward: loss is not on the tape");
  }
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<size_t>(loss.node)] = {1.0};
  for (int i = loss.node; i >= 0; --i) {
    auto& g = grads_[static_cast<size_t>(i)];
    if (g.empty()) continue;  // loss never reached this node
    auto& node = nodes_[static_cast<size_t>(i)];
    if (node.backward) node.backward(*this, g);
  }
}

void Tape::accumulate(int node, std::span<const double> g) {
  if (node < 0) return;
  auto& buf = grads_.at(static_cast<size_t>(node));
  if (buf.empty()) buf.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].size), 0.0);
  if (buf.size() != g.size()) {
    throw std::logic_error("gradient size mismatch on tape node");
  }
  for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

Tensor Tape::grad_by_node(int node, const Shape& shape) const {
  Tensor g = Tensor::zeros(shape);
  if (node < 0 || static_cast<size_t>(node) >= grads_.size()) return g;
  const auto& buf = grads_[static_cast<size_t>(node)];
  if (buf.empty()) return g;  // disconnected: zero gradient
  if (buf.size() != g.values.size()) {
    throw std::logic_error("stored gradient does not match tensor shape");
  }
  g.values = buf;
  return g;
}

Tensor Tape::grad(const Tensor& t) const {
  if (t.node < 0) {
    throw std::invalid_argument("grad: tensor is not on the tape");
  }
  return grad_by_node(t.node, t.shape);
}

Tensor Tape::grad_of(const Tensor& param) const {
  auto it = watched_.find(&param);
  if (it == watched_.end()) {
    throw std::invalid_argument("grad_of: tensor was never watched on this tape");
  }
  return grad_by_node(it->second, param.shape);
}

}  // namespace maf
