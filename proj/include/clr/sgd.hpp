#pragma once

#include <unordered_map>
#include <vector>

#include "clr/errors.hpp"
#include "clr/tensor.hpp"

namespace clr {

// SGD with classical momentum:
//
//   v <- momentum * v + g
//   p <- p - lr * v
//
// Velocity buffers are keyed by parameter identity and created lazily, so a
// state object can be reused across steps and parameter subsets. lr = 0 is
// allowed (a step becomes a no-op apart from velocity accumulation).
template <class S>
struct SgdStateT {
  S lr;
  S momentum;
  std::unordered_map<const TensorT<S>*, std::vector<S>> velocity;

  SgdStateT(S lr_, S momentum_ = S(0)) : lr(lr_), momentum(momentum_) {
    if (!(lr >= S(0))) throw RangeError("sgd lr must be >= 0");
    if (!(momentum >= S(0)) || momentum >= S(1))
      throw RangeError("sgd momentum must be in [0,1)");
  }
};

using SgdState = SgdStateT<float>;

// Applies one update to every parameter in `params` and zeroes their
// gradients. Stepping a frozen parameter (one without a gradient buffer) is
// a StateError rather than a silent skip.
template <class S>
void sgd_step(SgdStateT<S>& state, const std::vector<TensorPtrT<S>>& params) {
  for (const auto& p : params) {
    if (!p) throw StateError("sgd_step received a null parameter");
    if (!p->tracks_grad())
      throw StateError("sgd_step on a frozen parameter (no gradient buffer)");
    auto& v = state.velocity[p.get()];
    if (v.empty()) v.assign(p->data.size(), S(0));
    else if (v.size() != p->data.size())
      throw StateError("sgd velocity buffer size mismatch; parameter was reshaped");
    const std::size_t n = p->data.size();
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = state.momentum * v[i] + p->grad[i];
      p->data[i] -= state.lr * v[i];
    }
    p->zero_grad();
  }
}

}  // namespace clr
