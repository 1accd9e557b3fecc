#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "clr/backbone.hpp"

// Channel-wise lightweight reprogramming: a small depthwise kernel bank
// inserted after selected frozen convs, plus a task head. Each task owns one
// adapter; the backbone is shared and untouched.

namespace clr {

enum class ClrVariant { Standard, Full, Reduced, Mixed };

inline const char* variant_name(ClrVariant v) {
  switch (v) {
    case ClrVariant::Standard: return "standard";
    case ClrVariant::Full: return "full";
    case ClrVariant::Reduced: return "reduced";
    case ClrVariant::Mixed: return "mixed";
  }
  return "?";
}

inline ClrVariant variant_from_name(const std::string& s) {
  if (s == "standard") return ClrVariant::Standard;
  if (s == "full") return ClrVariant::Full;
  if (s == "reduced") return ClrVariant::Reduced;
  if (s == "mixed") return ClrVariant::Mixed;
  throw ConfigError("unknown clr variant: " + s);
}

// Reprogram-kernel size a variant attaches after a conv with kernel size
// conv_k; 0 means no attachment there.
//
// Standard skips 1x1 convs entirely; Full reprograms every conv with 3x3
// kernels; Reduced reprograms every conv but drops to 1x1 kernels on 1x1
// convs; Mixed uses Standard's attachment plus a learnable scalar blend.
inline int attachment_kernel(ClrVariant v, int conv_k) {
  switch (v) {
    case ClrVariant::Standard:
    case ClrVariant::Mixed:
      return conv_k > 1 ? 3 : 0;
    case ClrVariant::Full:
      return 3;
    case ClrVariant::Reduced:
      return conv_k == 1 ? 1 : 3;
  }
  return 0;
}

struct ClrLayer {
  TensorPtr kernels;       // [c,1,k,k]
  TensorPtr blend;         // scalar A (Mixed only)
  std::string attached_to; // conv site path in the backbone
};

struct TaskAdapter {
  int task_id = -1;
  ClrVariant variant = ClrVariant::Standard;
  int num_classes = 0;
  ArchSpec arch;  // the backbone arch this adapter was built against
  std::map<std::string, ClrLayer> layers;
  TensorPtr head_w, head_b;
  // Optional per-task norm affine overrides, keyed by conv site path.
  std::map<std::string, std::pair<TensorPtr, TensorPtr>> norm_affine;
  std::vector<EpochLogRow> training_log;
};

/// [c,1,k,k] depthwise identity: center tap 1, everything else 0.
inline TensorPtr identity_kernels(int c, int k) {
  auto t = make_tensor<float>({c, 1, k, k}, true);
  for (int ch = 0; ch < c; ++ch)
    t->data[static_cast<std::size_t>(ch) * k * k + static_cast<std::size_t>(k / 2) * k + k / 2] =
        1.0f;
  return t;
}

inline TaskAdapter make_adapter(const BackboneState& backbone, ClrVariant variant,
                                int num_classes, std::uint64_t seed) {
  if (!backbone.frozen) throw StateError("make_adapter requires a frozen backbone");
  if (num_classes < 1) throw SpecError("make_adapter needs at least one class");
  TaskAdapter a;
  a.variant = variant;
  a.num_classes = num_classes;
  a.arch = backbone.arch;
  for (const auto& site : validate(backbone.arch)) {
    const int k = attachment_kernel(variant, site.spec.k);
    if (k == 0) continue;
    ClrLayer layer;
    layer.attached_to = site.path;
    layer.kernels = identity_kernels(site.spec.out_ch, k);
    if (variant == ClrVariant::Mixed) layer.blend = full_like_shape<float>({1}, 1.0f, true);
    a.layers.emplace(site.path, std::move(layer));
  }
  Rng rng(seed);
  a.head_w = make_tensor<float>({num_classes, feature_dim(backbone.arch)}, true);
  he_init(*a.head_w, feature_dim(backbone.arch), rng);
  a.head_b = make_tensor<float>({num_classes}, true);
  return a;
}

// Clones the backbone's current gamma/beta at every norm site into the
// adapter as trainable per-task overrides.
inline void enable_norm_affine(TaskAdapter& a, const BackboneState& backbone) {
  for (const auto& [path, n] : backbone.bn_seen) {
    auto g = make_tensor<float>({backbone.params.at(path + ".bn.g")->dim(0)}, true);
    g->data = backbone.params.at(path + ".bn.g")->data;
    auto b = make_tensor<float>({backbone.params.at(path + ".bn.b")->dim(0)}, true);
    b->data = backbone.params.at(path + ".bn.b")->data;
    a.norm_affine[path] = {g, b};
  }
}

// One CLR application: depthwise conv with the layer's kernel bank, blended
// with the input when the layer carries a Mixed weight:
//
//   standard   y = K (*) x'          (per-channel k x k, pad k/2)
//   mixed      y = A*(K (*) x') + (1-A)*x'
inline TensorPtr clr_forward(Graph& g, const TensorPtr& x_prime, const ClrLayer& layer) {
  if (x_prime->ndim() != 4 || x_prime->dim(1) != layer.kernels->dim(0))
    throw ShapeError("clr_forward channel mismatch: input " + x_prime->shape_str() +
                     " vs kernel bank for " + std::to_string(layer.kernels->dim(0)) +
                     " channels");
  auto y = depthwise_conv2d(g, x_prime, layer.kernels);
  if (layer.blend) y = blend(g, layer.blend, y, x_prime);
  return y;
}

/// Eval-only convenience without a caller-managed graph.
inline TensorPtr clr_forward(const TensorPtr& x_prime, const ClrLayer& layer) {
  Graph g;
  g.recording = false;
  return clr_forward(g, x_prime, layer);
}

// Full reprogrammed pass: backbone layers with each attached conv's output
// rerouted through its ClrLayer (before norm/activation), then the adapter's
// head on the pooled features. Backbone tensors never receive gradients.
inline TensorPtr reprogrammed_forward(BackboneState& backbone, const TaskAdapter& adapter,
                                      Graph& g, const TensorPtr& x) {
  if (!(adapter.arch == backbone.arch))
    throw SpecError("adapter was built for arch `" + adapter.arch.name +
                    "` which does not match backbone arch `" + backbone.arch.name + "`");
  ForwardHooks hooks;
  hooks.after_conv = [&adapter](Graph& gg, const std::string& path, const TensorPtr& y) {
    const auto it = adapter.layers.find(path);
    return it == adapter.layers.end() ? y : clr_forward(gg, y, it->second);
  };
  if (!adapter.norm_affine.empty()) {
    hooks.gamma_override = [&adapter](const std::string& path) {
      const auto it = adapter.norm_affine.find(path);
      return it == adapter.norm_affine.end() ? TensorPtr() : it->second.first;
    };
    hooks.beta_override = [&adapter](const std::string& path) {
      const auto it = adapter.norm_affine.find(path);
      return it == adapter.norm_affine.end() ? TensorPtr() : it->second.second;
    };
  }
  auto feats = backbone_features(backbone, g, x, NormMode::Eval, &hooks);
  return linear(g, feats, adapter.head_w, adapter.head_b);
}

inline TensorPtr reprogrammed_forward(BackboneState& backbone, const TaskAdapter& adapter,
                                      const TensorPtr& x) {
  Graph g;
  g.recording = false;
  return reprogrammed_forward(backbone, adapter, g, x);
}

/// Every trainable tensor of the adapter, in a fixed deterministic order.
inline std::vector<TensorPtr> adapter_params(TaskAdapter& a, bool include_clr = true) {
  std::vector<TensorPtr> out;
  if (include_clr) {
    for (auto& [path, layer] : a.layers) {
      out.push_back(layer.kernels);
      if (layer.blend) out.push_back(layer.blend);
    }
  }
  for (auto& [path, gb] : a.norm_affine) {
    out.push_back(gb.first);
    out.push_back(gb.second);
  }
  out.push_back(a.head_w);
  out.push_back(a.head_b);
  return out;
}

}  // namespace clr
