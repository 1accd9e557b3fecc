#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "clr/arch.hpp"
#include "clr/dataset.hpp"
#include "clr/graph.hpp"
#include "clr/ops.hpp"
#include "clr/rng.hpp"
#include "clr/sgd.hpp"
#include "clr/tensor.hpp"

// The task-agnostic backbone: built from an ArchSpec, supervisedly
// pretrained, then frozen for good. After freeze() nothing in here changes;
// per-task state lives entirely in adapters.

namespace clr {

struct Provenance {
  std::string origin;  // "pretrain" or "import"; empty while fresh
  std::string dataset;
  int epochs = 0;
  double final_train_acc = 0.0;
  double final_val_acc = 0.0;
  std::uint64_t seed = 0;
  bool empty() const { return origin.empty(); }
};

struct EpochLogRow {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

// Parameter paths follow the conv sites from validate(): `<site>.w`,
// `<site>.b` (bias-free when the conv has a norm), `<site>.bn.g/.bn.b`
// (affine) and `<site>.bn.rm/.bn.rv` (running statistics, never gradients),
// plus `head.w` / `head.b`. bn_seen counts train-mode batches per norm site.
struct BackboneState {
  ArchSpec arch;
  std::map<std::string, TensorPtr> params;
  std::map<std::string, std::int64_t> bn_seen;
  bool frozen = false;
  Provenance provenance;
  std::vector<EpochLogRow> pretrain_log;
};

// Injection points for adapters: `after_conv` runs on each conv output before
// its norm/activation; the affine overrides substitute per-task gamma/beta at
// a norm site (return nullptr to keep the backbone's own).
struct ForwardHooks {
  std::function<TensorPtr(Graph&, const std::string&, const TensorPtr&)> after_conv;
  std::function<TensorPtr(const std::string&)> gamma_override;
  std::function<TensorPtr(const std::string&)> beta_override;
};

inline BackboneState build_network(const ArchSpec& arch, std::uint64_t seed) {
  const auto sites = validate(arch);
  BackboneState s;
  s.arch = arch;
  Rng rng(seed);
  for (const auto& site : sites) {
    auto w = make_tensor<float>({site.spec.out_ch, site.in_ch, site.spec.k, site.spec.k}, true);
    he_init(*w, static_cast<std::int64_t>(site.in_ch) * site.spec.k * site.spec.k, rng);
    s.params[site.path + ".w"] = w;
    if (site.spec.has_norm) {
      s.params[site.path + ".bn.g"] = full_like_shape<float>({site.spec.out_ch}, 1.0f, true);
      s.params[site.path + ".bn.b"] = make_tensor<float>({site.spec.out_ch}, true);
      s.params[site.path + ".bn.rm"] = make_tensor<float>({site.spec.out_ch});
      s.params[site.path + ".bn.rv"] = full_like_shape<float>({site.spec.out_ch}, 1.0f);
      s.bn_seen[site.path] = 0;
    } else {
      s.params[site.path + ".b"] = make_tensor<float>({site.spec.out_ch}, true);
    }
  }
  const int feat = feature_dim(arch);
  const int classes = head_classes(arch);
  auto hw = make_tensor<float>({classes, feat}, true);
  he_init(*hw, feat, rng);
  s.params["head.w"] = hw;
  s.params["head.b"] = make_tensor<float>({classes}, true);
  return s;
}

namespace detail {

inline TensorPtr conv_site_forward(BackboneState& s, Graph& g, const TensorPtr& x,
                                   const std::string& path, const ConvSpec& cs, NormMode mode,
                                   const ForwardHooks* hooks) {
  const auto& w = s.params.at(path + ".w");
  TensorPtr bias;
  if (!cs.has_norm) bias = s.params.at(path + ".b");
  auto y = conv2d(g, x, w, bias, cs.stride, cs.pad);
  if (hooks && hooks->after_conv) y = hooks->after_conv(g, path, y);
  if (cs.has_norm) {
    TensorPtr gamma, beta;
    if (hooks && hooks->gamma_override) gamma = hooks->gamma_override(path);
    if (hooks && hooks->beta_override) beta = hooks->beta_override(path);
    if (!gamma) gamma = s.params.at(path + ".bn.g");
    if (!beta) beta = s.params.at(path + ".bn.b");
    y = batchnorm2d(g, y, gamma, beta, s.params.at(path + ".bn.rm"),
                    s.params.at(path + ".bn.rv"), s.bn_seen.at(path), mode);
  }
  if (cs.has_relu) y = relu(g, y);
  return y;
}

}  // namespace detail

// Runs every layer up to and including GlobalAvgPool; the Head is not
// applied. Adapters ride along via `hooks`.
inline TensorPtr backbone_features(BackboneState& s, Graph& g, const TensorPtr& x, NormMode mode,
                                   const ForwardHooks* hooks = nullptr) {
  if (x->ndim() != 4)
    throw ShapeError("backbone input must be [b,c,h,w], got " + x->shape_str());
  if (x->dim(1) != s.arch.input_shape[0] || x->dim(2) != s.arch.input_shape[1] ||
      x->dim(3) != s.arch.input_shape[2])
    throw ShapeError("backbone input " + x->shape_str() + " does not match arch input shape");
  if (s.frozen && mode == NormMode::Train)
    throw StateError("train-mode forward through a frozen backbone");
  TensorPtr cur = x;
  for (std::size_t i = 0; i < s.arch.layers.size(); ++i) {
    const auto& l = s.arch.layers[i];
    const std::string lp = "l" + std::to_string(i);
    switch (l.kind) {
      case LayerKind::Conv:
        cur = detail::conv_site_forward(s, g, cur, lp + ".conv", l.conv, mode, hooks);
        break;
      case LayerKind::MaxPool:
        cur = maxpool2d(g, cur, l.pool_k, l.pool_stride);
        break;
      case LayerKind::ResidualBlock: {
        const TensorPtr entry = cur;
        TensorPtr main = cur;
        for (std::size_t j = 0; j < l.block.size(); ++j)
          main = detail::conv_site_forward(s, g, main, lp + ".conv" + std::to_string(j),
                                           l.block[j], mode, hooks);
        TensorPtr side = entry;
        if (l.shortcut)
          side = detail::conv_site_forward(s, g, entry, lp + ".sc", *l.shortcut, mode, hooks);
        cur = relu(g, add(g, main, side));
        break;
      }
      case LayerKind::GlobalAvgPool:
        cur = global_avgpool(g, cur);
        break;
      case LayerKind::Head:
        return cur;
    }
  }
  return cur;
}

/// Pooled feature vector [b, feature_dim], eval mode, no gradient recording.
inline TensorPtr forward_features(BackboneState& s, const TensorPtr& x) {
  Graph g;
  g.recording = false;
  return backbone_features(s, g, x, NormMode::Eval);
}

/// Features followed by the backbone's own head.
inline TensorPtr backbone_logits(BackboneState& s, Graph& g, const TensorPtr& x, NormMode mode) {
  auto f = backbone_features(s, g, x, mode);
  return linear(g, f, s.params.at("head.w"), s.params.at("head.b"));
}

struct PretrainHyper {
  int epochs = 5;
  float lr = 0.05f;
  float momentum = 0.9f;
  int batch_size = 64;
  std::uint64_t seed = 1;
};

namespace detail {

inline std::vector<TensorPtr> trainable_params(BackboneState& s) {
  std::vector<TensorPtr> out;
  for (auto& [name, t] : s.params)
    if (t->requires_grad) out.push_back(t);
  return out;
}

// Eval-mode accuracy of the backbone's own head over a whole dataset.
inline double dataset_accuracy(BackboneState& s, const Dataset& ds, int batch_size) {
  int correct = 0;
  std::vector<int> idxs;
  for (int start = 0; start < ds.size(); start += batch_size) {
    const int stop = std::min(ds.size(), start + batch_size);
    idxs.clear();
    for (int i = start; i < stop; ++i) idxs.push_back(i);
    Graph g;
    g.recording = false;
    auto logits = backbone_logits(s, g, ds.batch(idxs), NormMode::Eval);
    const auto pred = argmax_rows(*logits);
    for (int i = 0; i < stop - start; ++i)
      if (pred[static_cast<std::size_t>(i)] == ds.labels[static_cast<std::size_t>(idxs[i])])
        ++correct;
  }
  return ds.size() ? static_cast<double>(correct) / ds.size() : 0.0;
}

}  // namespace detail

// Supervised SGD on softmax cross-entropy over the whole parameter set.
// Returns the per-epoch log (also stored on the state). Norm layers run in
// train mode here and nowhere else.
inline std::vector<EpochLogRow> pretrain(BackboneState& s, const Dataset& train,
                                         const Dataset& val, const PretrainHyper& hyper) {
  if (s.frozen) throw StateError("pretrain on a frozen backbone");
  if (hyper.epochs < 0) throw RangeError("pretrain epochs must be >= 0");
  if (hyper.batch_size < 1) throw RangeError("pretrain batch_size must be positive");
  const int classes = head_classes(s.arch);
  for (const Dataset* ds : {&train, &val}) {
    if (ds->channels != s.arch.input_shape[0] || ds->height != s.arch.input_shape[1] ||
        ds->width != s.arch.input_shape[2])
      throw ShapeError("dataset geometry does not match arch input shape");
    for (int l : ds->labels)
      if (l < 0 || l >= classes)
        throw DataError("label " + std::to_string(l) + " outside head range [0," +
                        std::to_string(classes) + ")");
  }

  s.pretrain_log.clear();
  auto params = detail::trainable_params(s);
  SgdState opt(hyper.lr, hyper.momentum);
  Rng rng(hyper.seed);
  std::vector<int> order(static_cast<std::size_t>(train.size()));
  for (int i = 0; i < train.size(); ++i) order[static_cast<std::size_t>(i)] = i;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_acc = 0.0;
    int correct = 0, batches = 0;
    for (int start = 0; start < train.size(); start += hyper.batch_size) {
      const int stop = std::min(train.size(), start + hyper.batch_size);
      const std::vector<int> idxs(order.begin() + start, order.begin() + stop);
      Graph g;
      auto logits = backbone_logits(s, g, train.batch(idxs), NormMode::Train);
      const auto labels = train.batch_labels(idxs);
      auto loss = softmax_cross_entropy(g, logits, labels);
      g.backward(loss);
      sgd_step(opt, params);
      loss_acc += loss->data[0];
      ++batches;
      const auto pred = argmax_rows(*logits);
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] == labels[i]) ++correct;
    }
    EpochLogRow row;
    row.epoch = epoch;
    row.loss = batches ? loss_acc / batches : 0.0;
    row.train_acc = train.size() ? static_cast<double>(correct) / train.size() : 0.0;
    row.val_acc = detail::dataset_accuracy(s, val, hyper.batch_size);
    s.pretrain_log.push_back(row);
  }

  s.provenance.origin = "pretrain";
  s.provenance.dataset = train.name;
  s.provenance.epochs = hyper.epochs;
  s.provenance.seed = hyper.seed;
  if (!s.pretrain_log.empty()) {
    s.provenance.final_train_acc = s.pretrain_log.back().train_acc;
    s.provenance.final_val_acc = s.pretrain_log.back().val_acc;
  }
  return s.pretrain_log;
}

/// Marks every tensor non-trainable and drops gradient buffers. Idempotent.
inline BackboneState& freeze(BackboneState& s) {
  for (auto& [name, t] : s.params) {
    t->requires_grad = false;
    t->grad.clear();
    t->grad.shrink_to_fit();
  }
  s.frozen = true;
  return s;
}

// FNV-1a over parameter names, raw float bytes, and norm batch counters, in
// map order. Any mutation anywhere in the state changes this value.
inline std::uint64_t backbone_hash(const BackboneState& s) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : s.params) {
    mix_bytes(name.data(), name.size());
    mix_bytes(t->data.data(), t->data.size() * sizeof(float));
  }
  for (const auto& [name, n] : s.bn_seen) {
    mix_bytes(name.data(), name.size());
    mix_bytes(&n, sizeof(n));
  }
  return h;
}

}  // namespace clr
