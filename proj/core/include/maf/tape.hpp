#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "maf/tensor.hpp"

namespace maf {

// Reverse-mode tape. Built fresh for every forward pass (define-by-run);
// nodes are appended in construction order, so inputs always precede their
// consumers and backward is a single reverse sweep.
//
// Parameters are registered with watch(). Watching the same storage twice
// within one tape returns the same node, which is what makes gradients
// accumulate correctly when e.g. the backbone runs on two images in one step.
// A watched tensor must outlive the tape and must not be moved while the tape
// is alive.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<double>& upstream)>;

  Tensor watch(Tensor& param);

  // appends a node for an op result; inputs are tape node ids (may be -1 for
  // constants, those slots are ignored)
  int emit(const Tensor& out, std::vector<int> inputs, BackwardFn fn);

  // true if gradient can flow out of this tensor
  static bool tracked(const Tensor& t) { return t.node >= 0; }

  void backward(const Tensor& loss);

  // gradient of the last backward() w.r.t. a tensor on the tape
  // (zeros when the loss did not reach it)
  Tensor grad(const Tensor& t) const;

  // gradient w.r.t. a watched parameter, looked up by storage identity
  Tensor grad_of(const Tensor& param) const;

  bool is_watched(const Tensor& param) const { return watched_.contains(&param); }

  // adds g into the gradient buffer of `node`; no-op when node < 0
  void accumulate(int node, std::span<const double> g);

  size_t node_count() const { return nodes_.size(); }

  // watch t unless it is already a handle on this tape (node ids are only
  // valid for the tape that produced them; handles must not cross tapes)
  Tensor ensure_watched(Tensor& t) { return tracked(t) ? t : watch(t); }

 private:
  struct Node {
    std::vector<int> inputs;
    int64_t size = 0;
    BackwardFn backward;  // empty for leaves
  };

  Tensor grad_by_node(int node, const Shape& shape) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const Tensor*, int> watched_;
};

}  // namespace maf
