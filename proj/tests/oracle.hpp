#pragma once

// Independent reference implementations used as test oracles. Everything in
// this header is deliberately the most naive possible formulation (nested
// loops, double precision, zero shared code with the library) so agreement
// between the two is meaningful evidence.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

// Cross-correlation with zero padding, NCHW input, OIHW weight.
inline std::vector<double> conv2d(const std::vector<double>& x, int b, int ci, int h, int w,
                                  const std::vector<double>& wgt, int co, int kh, int kw,
                                  const std::vector<double>* bias, int stride, int pad,
                                  int* oh_out = nullptr, int* ow_out = nullptr) {
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (w + 2 * pad - kw) / stride + 1;
  if (oh_out) *oh_out = oh;
  if (ow_out) *ow_out = ow;
  std::vector<double> y(static_cast<std::size_t>(b) * co * oh * ow, 0.0);
  for (int n = 0; n < b; ++n)
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
          for (int c = 0; c < ci; ++c)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int si = i * stride + u - pad;
                const int sj = j * stride + v - pad;
                if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
                acc += x[(((static_cast<std::size_t>(n) * ci + c) * h + si) * w) + sj] *
                       wgt[(((static_cast<std::size_t>(o) * ci + c) * kh + u) * kw) + v];
              }
          y[(((static_cast<std::size_t>(n) * co + o) * oh + i) * ow) + j] = acc;
        }
  return y;
}

// Per-channel convolution, kernels [c,1,k,k], same-size padding.
inline std::vector<double> depthwise(const std::vector<double>& x, int b, int c, int h, int w,
                                     const std::vector<double>& ker, int k) {
  const int pad = k / 2;
  std::vector<double> y(x.size(), 0.0);
  for (int n = 0; n < b; ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          double acc = 0.0;
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const int si = i + u - pad;
              const int sj = j + v - pad;
              if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
              acc += x[(((static_cast<std::size_t>(n) * c + ch) * h + si) * w) + sj] *
                     ker[((static_cast<std::size_t>(ch) * k + u) * k) + v];
            }
          y[(((static_cast<std::size_t>(n) * c + ch) * h + i) * w) + j] = acc;
        }
  return y;
}

inline std::vector<double> linear(const std::vector<double>& x, int b, int n,
                                  const std::vector<double>& wgt, int m,
                                  const std::vector<double>& bias) {
  std::vector<double> y(static_cast<std::size_t>(b) * m, 0.0);
  for (int r = 0; r < b; ++r)
    for (int o = 0; o < m; ++o) {
      double acc = bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < n; ++i)
        acc += x[static_cast<std::size_t>(r) * n + i] * wgt[static_cast<std::size_t>(o) * n + i];
      y[static_cast<std::size_t>(r) * m + o] = acc;
    }
  return y;
}

inline std::vector<double> maxpool(const std::vector<double>& x, int b, int c, int h, int w,
                                   int k, int stride, int* oh_out, int* ow_out) {
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;
  *oh_out = oh;
  *ow_out = ow;
  std::vector<double> y(static_cast<std::size_t>(b) * c * oh * ow);
  for (int n = 0; n < b; ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double best = -1e300;
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const double val =
                  x[(((static_cast<std::size_t>(n) * c + ch) * h + i * stride + u) * w) +
                    j * stride + v];
              if (val > best) best = val;
            }
          y[(((static_cast<std::size_t>(n) * c + ch) * oh + i) * ow) + j] = best;
        }
  return y;
}

inline std::vector<double> global_avgpool(const std::vector<double>& x, int b, int c, int h,
                                          int w) {
  std::vector<double> y(static_cast<std::size_t>(b) * c, 0.0);
  for (int n = 0; n < b; ++n)
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int i = 0; i < h * w; ++i)
        acc += x[((static_cast<std::size_t>(n) * c + ch) * h * w) + i];
      y[static_cast<std::size_t>(n) * c + ch] = acc / (h * w);
    }
  return y;
}

struct BatchNormRef {
  std::vector<double> y, batch_mean, batch_var;  // biased variance
};

inline BatchNormRef batchnorm_train(const std::vector<double>& x, int b, int c, int h, int w,
                                    const std::vector<double>& gamma,
                                    const std::vector<double>& beta, double eps) {
  BatchNormRef r;
  r.y.resize(x.size());
  r.batch_mean.assign(static_cast<std::size_t>(c), 0.0);
  r.batch_var.assign(static_cast<std::size_t>(c), 0.0);
  const double m = static_cast<double>(b) * h * w;
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int n = 0; n < b; ++n)
      for (int i = 0; i < h * w; ++i)
        sum += x[((static_cast<std::size_t>(n) * c + ch) * h * w) + i];
    const double mean = sum / m;
    double var = 0.0;
    for (int n = 0; n < b; ++n)
      for (int i = 0; i < h * w; ++i) {
        const double d = x[((static_cast<std::size_t>(n) * c + ch) * h * w) + i] - mean;
        var += d * d;
      }
    var /= m;
    r.batch_mean[static_cast<std::size_t>(ch)] = mean;
    r.batch_var[static_cast<std::size_t>(ch)] = var;
    for (int n = 0; n < b; ++n)
      for (int i = 0; i < h * w; ++i) {
        const std::size_t idx = ((static_cast<std::size_t>(n) * c + ch) * h * w) + i;
        r.y[idx] = gamma[static_cast<std::size_t>(ch)] * (x[idx] - mean) / std::sqrt(var + eps) +
                   beta[static_cast<std::size_t>(ch)];
      }
  }
  return r;
}

inline double softmax_cross_entropy(const std::vector<double>& logits, int b, int k,
                                    const std::vector<int>& labels) {
  double total = 0.0;
  for (int n = 0; n < b; ++n) {
    double mx = -1e300;
    for (int j = 0; j < k; ++j) mx = std::max(mx, logits[static_cast<std::size_t>(n) * k + j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j)
      z += std::exp(logits[static_cast<std::size_t>(n) * k + j] - mx);
    const double correct =
        logits[static_cast<std::size_t>(n) * k + labels[static_cast<std::size_t>(n)]] - mx;
    total += std::log(z) - correct;
  }
  return total / b;
}

// ---------------------------------------------------------------------------
// ResNet-50 parameter accounting, enumerated from the textbook layer table
// rather than from any ArchSpec walk. Convs carry no bias (they are followed
// by batch norm, which contributes gamma+beta per channel); the final fully
// connected layer has weight + bias.

struct ConvRow {
  std::string path;
  int cin, cout, k;
};

inline std::vector<ConvRow> resnet50_convs() {
  std::vector<ConvRow> rows;
  rows.push_back({"stem", 3, 64, 7});
  const int mids[4] = {64, 128, 256, 512};
  const int blocks[4] = {3, 4, 6, 3};
  int in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    const int mid = mids[s];
    const int out = mid * 4;
    for (int bidx = 0; bidx < blocks[s]; ++bidx) {
      const std::string p = "s" + std::to_string(s) + "b" + std::to_string(bidx);
      rows.push_back({p + ".c1", in_ch, mid, 1});
      rows.push_back({p + ".c2", mid, mid, 3});
      rows.push_back({p + ".c3", mid, out, 1});
      if (bidx == 0) rows.push_back({p + ".sc", in_ch, out, 1});
      in_ch = out;
    }
  }
  return rows;
}

struct Resnet50Counts {
  std::int64_t frozen_total = 0;
  std::int64_t clr_standard = 0, clr_full = 0, clr_reduced = 0, clr_mixed = 0;
  int attach_standard = 0, attach_full = 0, attach_reduced = 0;
};

inline Resnet50Counts resnet50_counts(int num_classes) {
  Resnet50Counts r;
  for (const auto& c : resnet50_convs()) {
    r.frozen_total += static_cast<std::int64_t>(c.cin) * c.cout * c.k * c.k;  // conv weight
    r.frozen_total += 2LL * c.cout;                                           // bn gamma+beta
    if (c.k > 1) {
      r.clr_standard += 9LL * c.cout;
      r.clr_mixed += 9LL * c.cout + 1;
      ++r.attach_standard;
    }
    r.clr_full += 9LL * c.cout;
    ++r.attach_full;
    r.clr_reduced += (c.k == 1 ? 1LL : 9LL) * c.cout;
    ++r.attach_reduced;
  }
  r.frozen_total += 2048LL * num_classes + num_classes;  // fc weight + bias
  return r;
}

}  // namespace oracle
