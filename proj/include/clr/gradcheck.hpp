#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "clr/graph.hpp"
#include "clr/rng.hpp"
#include "clr/tensor.hpp"

// Finite-difference verification of the backward pass. Everything here runs
// in double so the comparison is limited by the method (central differences,
// O(eps^2)) rather than by float rounding.

namespace clr {

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::string worst;  // "input 1, element 17" style locator for the max
};

namespace detail {

// Scalar projection of an arbitrary-shaped op output. Fixed pseudo-random
// weights make every output element influence the loss, so a wrong gradient
// anywhere is visible.
inline TensorPtrT<double> weighted_sum(GraphT<double>& g, const TensorPtrT<double>& x,
                                       const std::vector<double>& w) {
  auto out = make_output<double>(g, {1}, {&x});
  double acc = 0.0;
  for (std::size_t i = 0; i < x->data.size(); ++i) acc += w[i] * x->data[i];
  out->data[0] = acc;
  if (out->tracks_grad()) {
    g.push({"weighted_sum", {x}, out, [=, &w]() {
              if (!x->tracks_grad()) return;
              for (std::size_t i = 0; i < x->data.size(); ++i)
                x->grad[i] += w[i] * out->grad[0];
            }});
  }
  return out;
}

}  // namespace detail

// Compares the analytic gradient of `loss(f(...))` with central finite
// differences for every element of every tensor in `wrt`.
//
//   f          builds the op under test on the given graph and returns its
//              output; it must read its inputs from the `wrt` tensors (and
//              any captured constants) so that perturbations are observed
//   wrt        tensors whose gradients are checked; each must track grads
//   eps        central-difference step
//   tol        max allowed relative error, |a - n| / max(|a|, |n|, 1e-8)
inline GradCheckReport gradient_check(const std::function<TensorPtrT<double>(GraphT<double>&)>& f,
                                      const std::vector<TensorPtrT<double>>& wrt,
                                      double eps = 1e-5, double tol = 1e-4) {
  for (const auto& t : wrt)
    if (!t || !t->tracks_grad())
      throw StateError("gradient_check: every wrt tensor must track gradients");

  // Forward + backward once for the analytic gradients.
  GraphT<double> g;
  auto out = f(g);
  Rng wrng(0x5eedULL);
  std::vector<double> w(out->data.size());
  for (auto& v : w) v = wrng.uniform(0.5, 1.5);
  auto loss = detail::weighted_sum(g, out, w);
  for (const auto& t : wrt) t->zero_grad();
  g.backward(loss);

  auto eval = [&]() {
    GraphT<double> g2;
    g2.recording = false;
    auto o = f(g2);
    double acc = 0.0;
    for (std::size_t i = 0; i < o->data.size(); ++i) acc += w[i] * o->data[i];
    return acc;
  };

  GradCheckReport rep;
  rep.pass = true;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& t = *wrt[ti];
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double saved = t.data[i];
      t.data[i] = saved + eps;
      const double up = eval();
      t.data[i] = saved - eps;
      const double dn = eval();
      t.data[i] = saved;
      const double numeric = (up - dn) / (2.0 * eps);
      const double analytic = t.grad[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input " + std::to_string(ti) + ", element " + std::to_string(i);
      }
    }
  }
  rep.pass = rep.max_rel_err < tol;
  return rep;
}

}  // namespace clr
