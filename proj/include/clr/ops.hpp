#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "clr/graph.hpp"
#include "clr/tensor.hpp"

// Forward and backward kernels for every operator the networks need.
// Convolution is cross-correlation (no kernel flip), the deep-learning
// convention. All reductions run in a fixed order on a single thread, so
// forward passes are deterministic given identical inputs.

namespace clr {

enum class NormMode { Train, Eval };

namespace detail {

// C[M,N] += A[M,K] * B[K,N]; innermost loop over contiguous N.
template <class S>
void gemm_acc(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int m = 0; m < M; ++m) {
    const S* a = A + static_cast<std::int64_t>(m) * K;
    S* c = C + static_cast<std::int64_t>(m) * N;
    for (int k = 0; k < K; ++k) {
      const S av = a[k];
      if (av == S(0)) continue;
      const S* b = B + static_cast<std::int64_t>(k) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T; dot products over contiguous K.
template <class S>
void gemm_acc_bt(int M, int K, int N, const S* A, const S* B, S* C) {
  for (int m = 0; m < M; ++m) {
    const S* a = A + static_cast<std::int64_t>(m) * K;
    S* c = C + static_cast<std::int64_t>(m) * N;
    for (int n = 0; n < N; ++n) {
      const S* b = B + static_cast<std::int64_t>(n) * K;
      S acc = S(0);
      for (int k = 0; k < K; ++k) acc += a[k] * b[k];
      c[n] += acc;
    }
  }
}

// Gathers conv patches of one image into a [ci*kh*kw, oh*ow] matrix.
template <class S>
void im2col(const S* img, int ci, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, S* col) {
  std::int64_t r = 0;
  for (int c = 0; c < ci; ++c) {
    const S* plane = img + static_cast<std::int64_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        S* dst = col + r * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          S* row = dst + static_cast<std::int64_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            for (int ox = 0; ox < ow; ++ox) row[ox] = S(0);
            continue;
          }
          const S* src = plane + static_cast<std::int64_t>(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[ox] = (ix >= 0 && ix < w) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column-gradient matrix back onto the input image.
template <class S>
void col2im_acc(const S* col, int ci, int h, int w, int kh, int kw, int stride,
                int pad, int oh, int ow, S* img) {
  std::int64_t r = 0;
  for (int c = 0; c < ci; ++c) {
    S* plane = img + static_cast<std::int64_t>(c) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++r) {
        const S* src = col + r * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          S* row = plane + static_cast<std::int64_t>(iy) * w;
          const S* srow = src + static_cast<std::int64_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) row[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// --- conv2d ---------------------------------------------------------------
//
// x [b,ci,h,w] * weight [co,ci,kh,kw] (+ bias [co]) -> [b,co,oh,ow].
// Zero padding; output size must divide exactly: (h + 2*pad - kh) % stride == 0.
template <class S>
TensorPtrT<S> conv2d(GraphT<S>& g, const TensorPtrT<S>& x, const TensorPtrT<S>& weight,
                     const std::type_identity_t<TensorPtrT<S>>& bias, int stride, int pad) {
  if (x->ndim() != 4 || weight->ndim() != 4)
    throw ShapeError("conv2d expects 4-d input and weight");
  if (stride < 1) throw ShapeError("conv2d stride must be positive");
  if (pad < 0) throw ShapeError("conv2d pad must be non-negative");
  const int b = x->dim(0), ci = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int co = weight->dim(0), kh = weight->dim(2), kw = weight->dim(3);
  if (weight->dim(1) != ci)
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(ci) +
                     ", weight expects " + std::to_string(weight->dim(1)));
  if (kh > h + 2 * pad || kw > w + 2 * pad)
    throw ShapeError("conv2d kernel larger than padded input");
  if ((h + 2 * pad - kh) % stride != 0 || (w + 2 * pad - kw) % stride != 0)
    throw ShapeError("conv2d output size is not an integer for stride " + std::to_string(stride));
  if (bias && (bias->ndim() != 1 || bias->dim(0) != co))
    throw ShapeError("conv2d bias must have shape [out_channels]");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;

  auto out = detail::make_output<S>(g, {b, co, oh, ow}, {&x, &weight, &bias});
  const int K = ci * kh * kw;
  const int N = oh * ow;
  std::vector<S> col(static_cast<std::size_t>(K) * N);
  for (int i = 0; i < b; ++i) {
    detail::im2col(x->data.data() + static_cast<std::int64_t>(i) * ci * h * w, ci, h, w,
                   kh, kw, stride, pad, oh, ow, col.data());
    S* dst = out->data.data() + static_cast<std::int64_t>(i) * co * N;
    detail::gemm_acc(co, K, N, weight->data.data(), col.data(), dst);
    if (bias) {
      for (int c = 0; c < co; ++c) {
        const S bv = bias->data[static_cast<std::size_t>(c)];
        S* row = dst + static_cast<std::int64_t>(c) * N;
        for (int n = 0; n < N; ++n) row[n] += bv;
      }
    }
  }

  if (out->tracks_grad()) {
    g.push({"conv2d", bias ? std::vector<TensorPtrT<S>>{x, weight, bias}
                           : std::vector<TensorPtrT<S>>{x, weight},
            out, [=]() {
              const S* dy = out->grad.data();
              std::vector<S> col_b(static_cast<std::size_t>(K) * N);
              const bool need_dx = x->tracks_grad();
              const bool need_dw = weight->tracks_grad();
              std::vector<S> dcol(need_dx ? static_cast<std::size_t>(K) * N : 0);
              for (int i = 0; i < b; ++i) {
                const S* dyb = dy + static_cast<std::int64_t>(i) * co * N;
                if (need_dw) {
                  detail::im2col(x->data.data() + static_cast<std::int64_t>(i) * ci * h * w,
                                 ci, h, w, kh, kw, stride, pad, oh, ow, col_b.data());
                  detail::gemm_acc_bt(co, N, K, dyb, col_b.data(), weight->grad.data());
                }
                if (need_dx) {
                  std::fill(dcol.begin(), dcol.end(), S(0));
                  // dcol[K,N] += W^T[K,co] * dy[co,N]
                  for (int c = 0; c < co; ++c) {
                    const S* wr = weight->data.data() + static_cast<std::int64_t>(c) * K;
                    const S* dyr = dyb + static_cast<std::int64_t>(c) * N;
                    for (int k = 0; k < K; ++k) {
                      const S wv = wr[k];
                      if (wv == S(0)) continue;
                      S* drow = dcol.data() + static_cast<std::int64_t>(k) * N;
                      for (int n = 0; n < N; ++n) drow[n] += wv * dyr[n];
                    }
                  }
                  detail::col2im_acc(dcol.data(), ci, h, w, kh, kw, stride, pad, oh, ow,
                                     x->grad.data() + static_cast<std::int64_t>(i) * ci * h * w);
                }
                if (bias && bias->tracks_grad()) {
                  for (int c = 0; c < co; ++c) {
                    const S* dyr = dyb + static_cast<std::int64_t>(c) * N;
                    S acc = S(0);
                    for (int n = 0; n < N; ++n) acc += dyr[n];
                    bias->grad[static_cast<std::size_t>(c)] += acc;
                  }
                }
              }
            }});
  }
  return out;
}

// --- depthwise_conv2d -------------------------------------------------------
//
// x [b,c,h,w] * kernels [c,1,k,k] -> [b,c,h,w]; channel j of the output
// depends only on channel j of the input (no cross-channel mixing). Padding
// defaults to k/2 so the spatial size is preserved; stride is 1.
template <class S>
TensorPtrT<S> depthwise_conv2d(GraphT<S>& g, const TensorPtrT<S>& x,
                               const TensorPtrT<S>& kernels, int pad = -1) {
  if (x->ndim() != 4 || kernels->ndim() != 4)
    throw ShapeError("depthwise_conv2d expects 4-d input and kernels");
  const int b = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const int k = kernels->dim(2);
  if (kernels->dim(0) != c)
    throw ShapeError("depthwise_conv2d channel mismatch: input has " + std::to_string(c) +
                     " channels, kernels have " + std::to_string(kernels->dim(0)));
  if (kernels->dim(1) != 1 || kernels->dim(3) != k)
    throw ShapeError("depthwise_conv2d kernels must have shape [c,1,k,k]");
  if (pad < 0) pad = k / 2;
  if (pad != k / 2)
    throw ShapeError("depthwise_conv2d requires pad = k/2 to preserve spatial size");
  if (k % 2 == 0) throw ShapeError("depthwise_conv2d kernel size must be odd");

  auto out = detail::make_output<S>(g, {b, c, h, w}, {&x, &kernels});
  const auto plane = static_cast<std::int64_t>(h) * w;
  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const S* src = x->data.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
      const S* ker = kernels->data.data() + static_cast<std::int64_t>(ch) * k * k;
      S* dst = out->data.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
      for (int oy = 0; oy < h; ++oy) {
        S* drow = dst + static_cast<std::int64_t>(oy) * w;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const S* srow = src + static_cast<std::int64_t>(iy) * w;
          for (int kx = 0; kx < k; ++kx) {
            const S kv = ker[ky * k + kx];
            if (kv == S(0)) continue;
            const int shift = kx - pad;
            const int x0 = std::max(0, -shift);
            const int x1 = std::min(w, w - shift);
            for (int ox = x0; ox < x1; ++ox) drow[ox] += kv * srow[ox + shift];
          }
        }
      }
    }
  }

  if (out->tracks_grad()) {
    g.push({"depthwise_conv2d", {x, kernels}, out, [=]() {
              const auto plane2 = static_cast<std::int64_t>(h) * w;
              for (int i = 0; i < b; ++i) {
                for (int ch = 0; ch < c; ++ch) {
                  const S* dy = out->grad.data() + (static_cast<std::int64_t>(i) * c + ch) * plane2;
                  const S* src = x->data.data() + (static_cast<std::int64_t>(i) * c + ch) * plane2;
                  if (kernels->tracks_grad()) {
                    S* dk = kernels->grad.data() + static_cast<std::int64_t>(ch) * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                      for (int kx = 0; kx < k; ++kx) {
                        S acc = S(0);
                        for (int oy = 0; oy < h; ++oy) {
                          const int iy = oy - pad + ky;
                          if (iy < 0 || iy >= h) continue;
                          const S* dyr = dy + static_cast<std::int64_t>(oy) * w;
                          const S* srow = src + static_cast<std::int64_t>(iy) * w;
                          const int shift = kx - pad;
                          const int x0 = std::max(0, -shift);
                          const int x1 = std::min(w, w - shift);
                          for (int ox = x0; ox < x1; ++ox) acc += dyr[ox] * srow[ox + shift];
                        }
                        dk[ky * k + kx] += acc;
                      }
                    }
                  }
                  if (x->tracks_grad()) {
                    S* dx = x->grad.data() + (static_cast<std::int64_t>(i) * c + ch) * plane2;
                    const S* ker = kernels->data.data() + static_cast<std::int64_t>(ch) * k * k;
                    for (int oy = 0; oy < h; ++oy) {
                      const S* dyr = dy + static_cast<std::int64_t>(oy) * w;
                      for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        S* dxr = dx + static_cast<std::int64_t>(iy) * w;
                        for (int kx = 0; kx < k; ++kx) {
                          const S kv = ker[ky * k + kx];
                          if (kv == S(0)) continue;
                          const int shift = kx - pad;
                          const int x0 = std::max(0, -shift);
                          const int x1 = std::min(w, w - shift);
                          for (int ox = x0; ox < x1; ++ox) dxr[ox + shift] += kv * dyr[ox];
                        }
                      }
                    }
                  }
                }
              }
            }});
  }
  return out;
}

// --- linear -----------------------------------------------------------------
//
// x [b,n] -> x * weight^T + bias, weight [m,n], bias [m].
template <class S>
TensorPtrT<S> linear(GraphT<S>& g, const TensorPtrT<S>& x, const TensorPtrT<S>& weight,
                     const std::type_identity_t<TensorPtrT<S>>& bias) {
  if (x->ndim() != 2 || weight->ndim() != 2)
    throw ShapeError("linear expects 2-d input and weight");
  const int b = x->dim(0), n = x->dim(1), m = weight->dim(0);
  if (weight->dim(1) != n)
    throw ShapeError("linear inner dims mismatch: input " + x->shape_str() + ", weight " +
                     weight->shape_str());
  if (bias && (bias->ndim() != 1 || bias->dim(0) != m))
    throw ShapeError("linear bias must have shape [m]");

  auto out = detail::make_output<S>(g, {b, m}, {&x, &weight, &bias});
  detail::gemm_acc_bt(b, n, m, x->data.data(), weight->data.data(), out->data.data());
  if (bias) {
    for (int i = 0; i < b; ++i) {
      S* row = out->data.data() + static_cast<std::int64_t>(i) * m;
      for (int j = 0; j < m; ++j) row[j] += bias->data[static_cast<std::size_t>(j)];
    }
  }

  if (out->tracks_grad()) {
    g.push({"linear", bias ? std::vector<TensorPtrT<S>>{x, weight, bias}
                           : std::vector<TensorPtrT<S>>{x, weight},
            out, [=]() {
              const S* dy = out->grad.data();
              if (weight->tracks_grad()) {
                // dW[m,n] += dy^T[m,b] * x[b,n]
                for (int i = 0; i < b; ++i) {
                  const S* xr = x->data.data() + static_cast<std::int64_t>(i) * n;
                  const S* dyr = dy + static_cast<std::int64_t>(i) * m;
                  for (int j = 0; j < m; ++j) {
                    const S dv = dyr[j];
                    if (dv == S(0)) continue;
                    S* wr = weight->grad.data() + static_cast<std::int64_t>(j) * n;
                    for (int t = 0; t < n; ++t) wr[t] += dv * xr[t];
                  }
                }
              }
              if (x->tracks_grad()) {
                // dx[b,n] += dy[b,m] * W[m,n]
                detail::gemm_acc(b, m, n, dy, weight->data.data(), x->grad.data());
              }
              if (bias && bias->tracks_grad()) {
                for (int i = 0; i < b; ++i) {
                  const S* dyr = dy + static_cast<std::int64_t>(i) * m;
                  for (int j = 0; j < m; ++j) bias->grad[static_cast<std::size_t>(j)] += dyr[j];
                }
              }
            }});
  }
  return out;
}

// --- relu -------------------------------------------------------------------
template <class S>
TensorPtrT<S> relu(GraphT<S>& g, const TensorPtrT<S>& x) {
  auto out = detail::make_output<S>(g, x->shape, {&x});
  const std::size_t n = x->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = x->data[i] > S(0) ? x->data[i] : S(0);
  if (out->tracks_grad()) {
    g.push({"relu", {x}, out, [=]() {
              if (!x->tracks_grad()) return;
              const std::size_t m = x->data.size();
              for (std::size_t i = 0; i < m; ++i)
                if (x->data[i] > S(0)) x->grad[i] += out->grad[i];
            }});
  }
  return out;
}

// --- maxpool2d ----------------------------------------------------------------
//
// Windowed max with floor semantics on the output size; partial windows at
// the bottom/right edge are dropped. Backward routes to the argmax; ties go
// to the first element in scan order.
template <class S>
TensorPtrT<S> maxpool2d(GraphT<S>& g, const TensorPtrT<S>& x, int k, int stride) {
  if (x->ndim() != 4) throw ShapeError("maxpool2d expects a 4-d input");
  if (k < 1 || stride < 1) throw ShapeError("maxpool2d window and stride must be positive");
  const int b = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  if (k > h || k > w) throw ShapeError("maxpool2d window larger than input");
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;

  auto out = detail::make_output<S>(g, {b, c, oh, ow}, {&x});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(out->numel()));
  std::int64_t oi = 0;
  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const S* plane = x->data.data() + (static_cast<std::int64_t>(i) * c + ch) * h * w;
      const std::int64_t base = (static_cast<std::int64_t>(i) * c + ch) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++oi) {
          const int y0 = oy * stride, x0 = ox * stride;
          S best = plane[static_cast<std::int64_t>(y0) * w + x0];
          std::int64_t best_at = base + static_cast<std::int64_t>(y0) * w + x0;
          for (int ky = 0; ky < k; ++ky) {
            const S* row = plane + static_cast<std::int64_t>(y0 + ky) * w;
            for (int kx = 0; kx < k; ++kx) {
              const S v = row[x0 + kx];
              if (v > best) {
                best = v;
                best_at = base + static_cast<std::int64_t>(y0 + ky) * w + (x0 + kx);
              }
            }
          }
          out->data[static_cast<std::size_t>(oi)] = best;
          (*argmax)[static_cast<std::size_t>(oi)] = best_at;
        }
      }
    }
  }

  if (out->tracks_grad()) {
    g.push({"maxpool2d", {x}, out, [=]() {
              if (!x->tracks_grad()) return;
              const std::size_t n = out->grad.size();
              for (std::size_t i = 0; i < n; ++i)
                x->grad[static_cast<std::size_t>((*argmax)[i])] += out->grad[i];
            }});
  }
  return out;
}

// --- global_avgpool -----------------------------------------------------------
template <class S>
TensorPtrT<S> global_avgpool(GraphT<S>& g, const TensorPtrT<S>& x) {
  if (x->ndim() != 4) throw ShapeError("global_avgpool expects a 4-d input");
  const int b = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  const S inv = S(1) / static_cast<S>(h * w);
  auto out = detail::make_output<S>(g, {b, c}, {&x});
  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const S* plane = x->data.data() + (static_cast<std::int64_t>(i) * c + ch) * h * w;
      S acc = S(0);
      const std::int64_t n = static_cast<std::int64_t>(h) * w;
      for (std::int64_t t = 0; t < n; ++t) acc += plane[t];
      out->data[static_cast<std::size_t>(static_cast<std::int64_t>(i) * c + ch)] = acc * inv;
    }
  }
  if (out->tracks_grad()) {
    g.push({"global_avgpool", {x}, out, [=]() {
              if (!x->tracks_grad()) return;
              for (int i = 0; i < b; ++i) {
                for (int ch = 0; ch < c; ++ch) {
                  const S dv = out->grad[static_cast<std::size_t>(static_cast<std::int64_t>(i) * c + ch)] * inv;
                  S* dplane = x->grad.data() + (static_cast<std::int64_t>(i) * c + ch) * h * w;
                  const std::int64_t n = static_cast<std::int64_t>(h) * w;
                  for (std::int64_t t = 0; t < n; ++t) dplane[t] += dv;
                }
              }
            }});
  }
  return out;
}

// --- batchnorm2d ----------------------------------------------------------------
//
// Train mode normalizes with biased batch statistics and folds them into the
// running estimates with momentum 0.1; eval mode uses the running estimates
// and is a pure per-channel affine map. `batches_seen` counts train-mode
// invocations; eval mode before any statistics were recorded is a StateError.
template <class S>
TensorPtrT<S> batchnorm2d(GraphT<S>& g, const TensorPtrT<S>& x, const TensorPtrT<S>& gamma,
                          const TensorPtrT<S>& beta, const TensorPtrT<S>& running_mean,
                          const TensorPtrT<S>& running_var, std::int64_t& batches_seen,
                          NormMode mode, S momentum = S(0.1), S eps = S(1e-5)) {
  if (x->ndim() != 4) throw ShapeError("batchnorm2d expects a 4-d input");
  const int b = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
  for (const auto& t : {gamma, beta, running_mean, running_var})
    if (t->numel() != c)
      throw ShapeError("batchnorm2d per-channel vectors must have length " + std::to_string(c));
  if (mode == NormMode::Eval && batches_seen == 0)
    throw StateError("batchnorm2d eval requested before any statistics were recorded");

  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t per_ch = static_cast<std::int64_t>(b) * plane;
  auto out = detail::make_output<S>(g, x->shape, {&x, &gamma, &beta});

  auto mean = std::make_shared<std::vector<S>>(static_cast<std::size_t>(c));
  auto invstd = std::make_shared<std::vector<S>>(static_cast<std::size_t>(c));
  if (mode == NormMode::Train) {
    for (int ch = 0; ch < c; ++ch) {
      S acc = S(0);
      for (int i = 0; i < b; ++i) {
        const S* p = x->data.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
        for (std::int64_t t = 0; t < plane; ++t) acc += p[t];
      }
      const S mu = acc / static_cast<S>(per_ch);
      S var = S(0);
      for (int i = 0; i < b; ++i) {
        const S* p = x->data.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
        for (std::int64_t t = 0; t < plane; ++t) {
          const S d = p[t] - mu;
          var += d * d;
        }
      }
      var /= static_cast<S>(per_ch);
      (*mean)[static_cast<std::size_t>(ch)] = mu;
      (*invstd)[static_cast<std::size_t>(ch)] = S(1) / std::sqrt(var + eps);
      running_mean->data[static_cast<std::size_t>(ch)] =
          (S(1) - momentum) * running_mean->data[static_cast<std::size_t>(ch)] + momentum * mu;
      running_var->data[static_cast<std::size_t>(ch)] =
          (S(1) - momentum) * running_var->data[static_cast<std::size_t>(ch)] + momentum * var;
    }
    ++batches_seen;
  } else {
    for (int ch = 0; ch < c; ++ch) {
      (*mean)[static_cast<std::size_t>(ch)] = running_mean->data[static_cast<std::size_t>(ch)];
      (*invstd)[static_cast<std::size_t>(ch)] =
          S(1) / std::sqrt(running_var->data[static_cast<std::size_t>(ch)] + eps);
    }
  }

  for (int i = 0; i < b; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      const S mu = (*mean)[static_cast<std::size_t>(ch)];
      const S is = (*invstd)[static_cast<std::size_t>(ch)];
      const S gm = gamma->data[static_cast<std::size_t>(ch)];
      const S bt = beta->data[static_cast<std::size_t>(ch)];
      const S* src = x->data.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
      S* dst = out->data.data() + (static_cast<std::int64_t>(i) * c + ch) * plane;
      for (std::int64_t t = 0; t < plane; ++t) dst[t] = gm * (src[t] - mu) * is + bt;
    }
  }

  if (out->tracks_grad()) {
    g.push({"batchnorm2d", {x, gamma, beta}, out, [=]() {
              for (int ch = 0; ch < c; ++ch) {
                const S mu = (*mean)[static_cast<std::size_t>(ch)];
                const S is = (*invstd)[static_cast<std::size_t>(ch)];
                const S gm = gamma->data[static_cast<std::size_t>(ch)];
                // Per-channel reductions over the batch.
                S sum_dy = S(0), sum_dy_xhat = S(0);
                for (int i = 0; i < b; ++i) {
                  const std::int64_t off = (static_cast<std::int64_t>(i) * c + ch) * plane;
                  const S* dy = out->grad.data() + off;
                  const S* src = x->data.data() + off;
                  for (std::int64_t t = 0; t < plane; ++t) {
                    sum_dy += dy[t];
                    sum_dy_xhat += dy[t] * (src[t] - mu) * is;
                  }
                }
                if (gamma->tracks_grad()) gamma->grad[static_cast<std::size_t>(ch)] += sum_dy_xhat;
                if (beta->tracks_grad()) beta->grad[static_cast<std::size_t>(ch)] += sum_dy;
                if (!x->tracks_grad()) continue;
                if (mode == NormMode::Train) {
                  const S n = static_cast<S>(per_ch);
                  for (int i = 0; i < b; ++i) {
                    const std::int64_t off = (static_cast<std::int64_t>(i) * c + ch) * plane;
                    const S* dy = out->grad.data() + off;
                    const S* src = x->data.data() + off;
                    S* dx = x->grad.data() + off;
                    for (std::int64_t t = 0; t < plane; ++t) {
                      const S xhat = (src[t] - mu) * is;
                      dx[t] += gm * is * (dy[t] - sum_dy / n - xhat * sum_dy_xhat / n);
                    }
                  }
                } else {
                  const S scale = gm * is;
                  for (int i = 0; i < b; ++i) {
                    const std::int64_t off = (static_cast<std::int64_t>(i) * c + ch) * plane;
                    const S* dy = out->grad.data() + off;
                    S* dx = x->grad.data() + off;
                    for (std::int64_t t = 0; t < plane; ++t) dx[t] += scale * dy[t];
                  }
                }
              }
            }});
  }
  return out;
}

// --- softmax_cross_entropy ------------------------------------------------------
//
// Mean over the batch of -log softmax(logits)[label], stabilized by
// max-subtraction. Returns a scalar tensor [1].
template <class S>
TensorPtrT<S> softmax_cross_entropy(GraphT<S>& g, const TensorPtrT<S>& logits,
                                    const std::vector<int>& labels) {
  if (logits->ndim() != 2) throw ShapeError("softmax_cross_entropy expects 2-d logits");
  const int b = logits->dim(0), k = logits->dim(1);
  if (static_cast<int>(labels.size()) != b)
    throw ShapeError("softmax_cross_entropy labels length must equal batch size");
  for (int lab : labels)
    if (lab < 0 || lab >= k)
      throw DataError("label " + std::to_string(lab) + " outside [0," + std::to_string(k) + ")");

  auto probs = std::make_shared<std::vector<S>>(logits->data.size());
  S loss_acc = S(0);
  for (int i = 0; i < b; ++i) {
    const S* row = logits->data.data() + static_cast<std::int64_t>(i) * k;
    S* prow = probs->data() + static_cast<std::int64_t>(i) * k;
    S mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S denom = S(0);
    for (int j = 0; j < k; ++j) {
      prow[j] = std::exp(row[j] - mx);
      denom += prow[j];
    }
    const S inv = S(1) / denom;
    for (int j = 0; j < k; ++j) prow[j] *= inv;
    loss_acc += -(row[labels[static_cast<std::size_t>(i)]] - mx - std::log(denom));
  }

  auto out = detail::make_output<S>(g, {1}, {&logits});
  out->data[0] = loss_acc / static_cast<S>(b);
  if (out->tracks_grad()) {
    g.push({"softmax_cross_entropy", {logits}, out, [=]() {
              if (!logits->tracks_grad()) return;
              const S scale = out->grad[0] / static_cast<S>(b);
              for (int i = 0; i < b; ++i) {
                const S* prow = probs->data() + static_cast<std::int64_t>(i) * k;
                S* drow = logits->grad.data() + static_cast<std::int64_t>(i) * k;
                const int lab = labels[static_cast<std::size_t>(i)];
                for (int j = 0; j < k; ++j)
                  drow[j] += scale * (prow[j] - (j == lab ? S(1) : S(0)));
              }
            }});
  }
  return out;
}

// --- add (residual join) ---------------------------------------------------------
template <class S>
TensorPtrT<S> add(GraphT<S>& g, const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
  if (a->shape != b->shape)
    throw ShapeError("add shape mismatch: " + a->shape_str() + " vs " + b->shape_str());
  auto out = detail::make_output<S>(g, a->shape, {&a, &b});
  const std::size_t n = a->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (out->tracks_grad()) {
    g.push({"add", {a, b}, out, [=]() {
              const std::size_t m = out->grad.size();
              if (a->tracks_grad())
                for (std::size_t i = 0; i < m; ++i) a->grad[i] += out->grad[i];
              if (b->tracks_grad())
                for (std::size_t i = 0; i < m; ++i) b->grad[i] += out->grad[i];
            }});
  }
  return out;
}

// --- blend ------------------------------------------------------------------------
//
// out = A*y + (1-A)*x with a scalar tensor A; the weighted combination of a
// reprogrammed map with the original one.
template <class S>
TensorPtrT<S> blend(GraphT<S>& g, const TensorPtrT<S>& weight_a, const TensorPtrT<S>& y,
                    const TensorPtrT<S>& x) {
  if (weight_a->numel() != 1) throw ShapeError("blend weight must be a scalar tensor");
  if (y->shape != x->shape)
    throw ShapeError("blend shape mismatch: " + y->shape_str() + " vs " + x->shape_str());
  const S a = weight_a->data[0];
  auto out = detail::make_output<S>(g, x->shape, {&weight_a, &y, &x});
  const std::size_t n = x->data.size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = a * y->data[i] + (S(1) - a) * x->data[i];
  if (out->tracks_grad()) {
    g.push({"blend", {weight_a, y, x}, out, [=]() {
              const std::size_t m = out->grad.size();
              if (weight_a->tracks_grad()) {
                S acc = S(0);
                for (std::size_t i = 0; i < m; ++i)
                  acc += out->grad[i] * (y->data[i] - x->data[i]);
                weight_a->grad[0] += acc;
              }
              if (y->tracks_grad())
                for (std::size_t i = 0; i < m; ++i) y->grad[i] += a * out->grad[i];
              if (x->tracks_grad())
                for (std::size_t i = 0; i < m; ++i) x->grad[i] += (S(1) - a) * out->grad[i];
            }});
  }
  return out;
}

/// Row argmax for [b,k] logits; ties break toward the lowest class index.
template <class S>
std::vector<int> argmax_rows(const TensorT<S>& logits) {
  const int b = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    const S* row = logits.data.data() + static_cast<std::int64_t>(i) * k;
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace clr
