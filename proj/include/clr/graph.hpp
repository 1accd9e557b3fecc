#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "clr/errors.hpp"
#include "clr/tensor.hpp"

namespace clr {

// One recorded operation: the tensors it consumed, the tensor it produced,
// and a closure that adds this op's contribution into the inputs' grad
// buffers given the output's grad buffer.
template <class S>
struct NodeT {
  const char* op;
  std::vector<TensorPtrT<S>> inputs;
  TensorPtrT<S> output;
  std::function<void()> backward;
};

// Reverse-mode tape. Nodes are appended in execution order, so the list is
// topologically sorted by construction; backward walks it in reverse.
//
// A graph and its tensors are owned by exactly one worker per step; nothing
// here is thread-safe by design.
template <class S>
class GraphT {
 public:
  // When false, ops run forward-only and record nothing (inference mode).
  bool recording = true;

  void push(NodeT<S> node) { nodes_.push_back(std::move(node)); }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  const NodeT<S>& node(std::size_t i) const { return nodes_[i]; }

  // Populates grads of every grad-tracking tensor reachable from `loss`.
  // Grads accumulate (+=); callers zero parameter grads between steps.
  void backward(const TensorPtrT<S>& loss) {
    if (loss->numel() != 1)
      throw ShapeError("backward requires a scalar loss, got shape " + loss->shape_str());
    if (!loss->tracks_grad()) return;  // loss does not depend on any tracked tensor
    loss->grad[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output->tracks_grad() && it->backward) it->backward();
    }
  }

 private:
  std::vector<NodeT<S>> nodes_;
};

using Graph = GraphT<float>;

namespace detail {

// An op output tracks gradients iff some input does: gradient flow stops
// exactly at the frontier of frozen parameters, which is what lets adapter
// training skip backbone weight gradients entirely.
template <class S>
TensorPtrT<S> make_output(const GraphT<S>& g, std::vector<int> shape,
                          std::initializer_list<const TensorPtrT<S>*> inputs) {
  bool track = false;
  if (g.recording) {
    for (const auto* in : inputs)
      if (*in && (*in)->tracks_grad()) track = true;
  }
  auto out = make_tensor<S>(std::move(shape));
  if (track) out->ensure_grad();
  return out;
}

}  // namespace detail
}  // namespace clr
