#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "clr/errors.hpp"
#include "clr/rng.hpp"

namespace clr {

// N-dimensional value buffer with an optional gradient buffer of the same
// shape. Row-major, last axis fastest. Feature maps are [batch, channels,
// height, width]; conv weights are [out_ch, in_ch, kh, kw].
//
// The scalar type is a template parameter: float is the training/inference
// mode, double exists solely for finite-difference gradient checking.
template <class S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty unless gradients are tracked for this tensor
  bool requires_grad = false;

  TensorT() = default;

  explicit TensorT(std::vector<int> shape_, bool requires_grad_ = false)
      : shape(std::move(shape_)), requires_grad(requires_grad_) {
    for (int d : shape) {
      if (d < 1) throw ShapeError("tensor dims must all be >= 1");
    }
    data.assign(static_cast<std::size_t>(count(shape)), S(0));
    if (requires_grad) grad.assign(data.size(), S(0));
  }

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  bool tracks_grad() const { return !grad.empty(); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), S(0));
  }

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  }

  // Flat element access for 4-d tensors [n,c,h,w].
  S& at(int n, int c, int h, int w) {
    return data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  S at(int n, int c, int h, int w) const {
    return data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << ',';
      os << shape[i];
    }
    os << ']';
    return os.str();
  }
};

template <class S>
using TensorPtrT = std::shared_ptr<TensorT<S>>;

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;

template <class S>
TensorPtrT<S> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  return std::make_shared<TensorT<S>>(std::move(shape), requires_grad);
}

template <class S>
TensorPtrT<S> make_tensor(std::vector<int> shape, std::initializer_list<S> values,
                          bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  if (static_cast<std::int64_t>(values.size()) != t->numel())
    throw ShapeError("initializer size does not match shape");
  std::copy(values.begin(), values.end(), t->data.begin());
  return t;
}

template <class S>
TensorPtrT<S> full_like_shape(std::vector<int> shape, S value, bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

/// He (fan-in) normal init: N(0, sqrt(2 / fan_in)).
template <class S>
void he_init(TensorT<S>& t, std::int64_t fan_in, Rng& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<S>(rng.next_normal() * std_dev);
}

template <class S>
void fill_uniform(TensorT<S>& t, double lo, double hi, Rng& rng) {
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(lo, hi));
}

template <class S>
bool same_shape(const TensorT<S>& a, const TensorT<S>& b) {
  return a.shape == b.shape;
}

}  // namespace clr
