#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clr/errors.hpp"

// Declarative CNN descriptions. An ArchSpec is the single source of truth for
// network construction, adapter attachment points, parameter accounting, and
// FLOP estimates; everything else walks it.

namespace clr {

struct ConvSpec {
  int out_ch = 0;
  int k = 3;
  int stride = 1;
  int pad = 0;
  bool has_norm = false;  // batch norm; norm'd convs carry no bias
  bool has_relu = false;
  bool operator==(const ConvSpec&) const = default;
};

enum class LayerKind { Conv, MaxPool, ResidualBlock, GlobalAvgPool, Head };

// One entry of an ArchSpec. Exactly the fields for `kind` are meaningful.
// A ResidualBlock runs its convs in sequence, adds the shortcut branch
// (identity, or a projection conv when `shortcut` is set) and applies a final
// ReLU after the join.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  ConvSpec conv;                      // Conv
  int pool_k = 2, pool_stride = 2;    // MaxPool
  std::vector<ConvSpec> block;        // ResidualBlock main path
  std::optional<ConvSpec> shortcut;   // ResidualBlock projection (else identity)
  int head_classes = 0;               // Head
  bool operator==(const LayerSpec&) const = default;
};

struct ArchSpec {
  std::string name;
  std::array<int, 3> input_shape{0, 0, 0};  // (channels, h, w)
  std::vector<LayerSpec> layers;
  bool operator==(const ArchSpec&) const = default;
};

// A conv layer located inside an arch by the shape walk: its parameter-path
// prefix, its spec, and the tensor geometry at that point. `sc` marks
// residual shortcut projections.
struct ConvSite {
  std::string path;  // e.g. "l0.conv", "l2.conv1", "l2.sc"
  ConvSpec spec;
  int in_ch = 0;
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  bool is_shortcut = false;
};

namespace detail {

inline void walk_conv(const std::string& path, const ConvSpec& cs, bool shortcut, int& c,
                      int& h, int& w, std::vector<ConvSite>* sites) {
  if (cs.out_ch < 1 || cs.k < 1 || cs.stride < 1 || cs.pad < 0)
    throw SpecError("invalid conv spec at " + path);
  const int ph = h + 2 * cs.pad, pw = w + 2 * cs.pad;
  if (cs.k > ph || cs.k > pw)
    throw SpecError("conv kernel exceeds padded input at " + path);
  if ((ph - cs.k) % cs.stride != 0 || (pw - cs.k) % cs.stride != 0)
    throw SpecError("conv output size not integral at " + path);
  const int oh = (ph - cs.k) / cs.stride + 1;
  const int ow = (pw - cs.k) / cs.stride + 1;
  if (sites) sites->push_back({path, cs, c, h, w, oh, ow, shortcut});
  c = cs.out_ch;
  h = oh;
  w = ow;
}

}  // namespace detail

// Walks the arch front to back, checking every invariant (channel chaining,
// integral conv output sizes, single trailing Head, residual branch
// compatibility) and collecting every conv site in execution order.
// Throws SpecError on any violation.
inline std::vector<ConvSite> validate(const ArchSpec& arch) {
  if (arch.layers.empty()) throw SpecError("arch has no layers");
  if (arch.input_shape[0] < 1 || arch.input_shape[1] < 1 || arch.input_shape[2] < 1)
    throw SpecError("arch input shape must be positive");
  std::vector<ConvSite> sites;
  int c = arch.input_shape[0], h = arch.input_shape[1], w = arch.input_shape[2];
  bool pooled = false, headed = false;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const std::string lp = "l" + std::to_string(i);
    if (headed) throw SpecError("layer after Head at " + lp);
    switch (l.kind) {
      case LayerKind::Conv:
        if (pooled) throw SpecError("Conv after GlobalAvgPool at " + lp);
        detail::walk_conv(lp + ".conv", l.conv, false, c, h, w, &sites);
        break;
      case LayerKind::MaxPool:
        if (pooled) throw SpecError("MaxPool after GlobalAvgPool at " + lp);
        if (l.pool_k < 1 || l.pool_stride < 1)
          throw SpecError("invalid pool spec at " + lp);
        if (l.pool_k > h || l.pool_k > w)
          throw SpecError("pool window exceeds input at " + lp);
        h = (h - l.pool_k) / l.pool_stride + 1;
        w = (w - l.pool_k) / l.pool_stride + 1;
        break;
      case LayerKind::ResidualBlock: {
        if (pooled) throw SpecError("ResidualBlock after GlobalAvgPool at " + lp);
        if (l.block.empty()) throw SpecError("empty residual block at " + lp);
        const int c_in = c, h_in = h, w_in = w;
        for (std::size_t j = 0; j < l.block.size(); ++j)
          detail::walk_conv(lp + ".conv" + std::to_string(j), l.block[j], false, c, h, w,
                            &sites);
        if (l.shortcut) {
          int sc = c_in, sh = h_in, sw = w_in;
          detail::walk_conv(lp + ".sc", *l.shortcut, true, sc, sh, sw, &sites);
          if (sc != c || sh != h || sw != w)
            throw SpecError("residual shortcut output mismatches main path at " + lp);
        } else if (c_in != c || h_in != h || w_in != w) {
          throw SpecError("identity shortcut requires matching shapes at " + lp);
        }
        break;
      }
      case LayerKind::GlobalAvgPool:
        if (pooled) throw SpecError("duplicate GlobalAvgPool at " + lp);
        pooled = true;
        h = w = 1;
        break;
      case LayerKind::Head:
        if (!pooled) throw SpecError("Head requires GlobalAvgPool first at " + lp);
        if (l.head_classes < 1) throw SpecError("Head needs at least one class at " + lp);
        headed = true;
        break;
    }
  }
  if (!headed) throw SpecError("arch has no Head layer");
  return sites;
}

/// Channel count of the pooled feature vector feeding the Head.
inline int feature_dim(const ArchSpec& arch) {
  int c = arch.input_shape[0], h = arch.input_shape[1], w = arch.input_shape[2];
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.kind == LayerKind::Conv) {
      detail::walk_conv("", l.conv, false, c, h, w, nullptr);
    } else if (l.kind == LayerKind::ResidualBlock) {
      for (const auto& cs : l.block) detail::walk_conv("", cs, false, c, h, w, nullptr);
    } else if (l.kind == LayerKind::MaxPool) {
      h = (h - l.pool_k) / l.pool_stride + 1;
      w = (w - l.pool_k) / l.pool_stride + 1;
    }
  }
  return c;
}

inline int head_classes(const ArchSpec& arch) {
  for (const auto& l : arch.layers)
    if (l.kind == LayerKind::Head) return l.head_classes;
  throw SpecError("arch has no Head layer");
}

namespace detail {

inline ConvSpec conv(int out_ch, int k, int stride, int pad, bool relu = true) {
  return {out_ch, k, stride, pad, true, relu};
}

inline LayerSpec basic_block(int width, int stride, bool project) {
  LayerSpec l;
  l.kind = LayerKind::ResidualBlock;
  l.block = {conv(width, 3, stride, 1, true), conv(width, 3, 1, 1, false)};
  if (project) l.shortcut = conv(width, 1, stride, 0, false);
  return l;
}

inline LayerSpec bottleneck(int mid, int stride, bool project) {
  LayerSpec l;
  l.kind = LayerKind::ResidualBlock;
  l.block = {conv(mid, 1, 1, 0, true), conv(mid, 3, stride, 1, true),
             conv(4 * mid, 1, 1, 0, false)};
  if (project) l.shortcut = conv(4 * mid, 1, stride, 0, false);
  return l;
}

}  // namespace detail

// Built-in architectures.
//
//   tinynet        1x28x28 input, three 3x3 convs, the workhorse for tests
//   resnet18-lite  3x33x33 input, 4 stages x 2 basic blocks, widths
//                  16/32/64/128; the odd resolution keeps every stride-2
//                  conv's output size integral
//   resnet50-shape the exact ResNet-50 layer inventory at 3x229x229 (same
//                  integrality choice; parameter counts are
//                  resolution-independent), used for accounting only
inline ArchSpec arch_preset(const std::string& name, int num_classes) {
  if (num_classes < 1) throw SpecError("arch preset needs at least one class");
  ArchSpec a;
  a.name = name;
  auto gap = [] { LayerSpec l; l.kind = LayerKind::GlobalAvgPool; return l; };
  auto head = [&] { LayerSpec l; l.kind = LayerKind::Head; l.head_classes = num_classes; return l; };
  auto plain = [](ConvSpec cs) { LayerSpec l; l.kind = LayerKind::Conv; l.conv = cs; return l; };
  if (name == "tinynet") {
    a.input_shape = {1, 28, 28};
    LayerSpec mp;
    mp.kind = LayerKind::MaxPool;
    mp.pool_k = 2;
    mp.pool_stride = 2;
    a.layers = {plain(detail::conv(16, 3, 1, 1)), plain(detail::conv(32, 3, 1, 1)), mp,
                plain(detail::conv(64, 3, 1, 1)), gap(), head()};
  } else if (name == "resnet18-lite") {
    a.input_shape = {3, 33, 33};
    a.layers = {plain(detail::conv(16, 3, 1, 1))};
    const int widths[4] = {16, 32, 64, 128};
    for (int s = 0; s < 4; ++s) {
      const int stride = s == 0 ? 1 : 2;
      a.layers.push_back(detail::basic_block(widths[s], stride, s != 0));
      a.layers.push_back(detail::basic_block(widths[s], 1, false));
    }
    a.layers.push_back(gap());
    a.layers.push_back(head());
  } else if (name == "resnet50-shape") {
    a.input_shape = {3, 229, 229};
    a.layers = {plain(detail::conv(64, 7, 2, 3))};
    LayerSpec mp;
    mp.kind = LayerKind::MaxPool;
    mp.pool_k = 3;
    mp.pool_stride = 2;
    a.layers.push_back(mp);
    const int mids[4] = {64, 128, 256, 512};
    const int depths[4] = {3, 4, 6, 3};
    for (int s = 0; s < 4; ++s) {
      for (int b = 0; b < depths[s]; ++b) {
        const int stride = (s > 0 && b == 0) ? 2 : 1;
        a.layers.push_back(detail::bottleneck(mids[s], stride, b == 0));
      }
    }
    a.layers.push_back(gap());
    a.layers.push_back(head());
  } else {
    throw SpecError("unknown arch preset: " + name);
  }
  validate(a);
  return a;
}

// --- JSON (de)serialization --------------------------------------------------

inline nlohmann::json arch_to_json(const ArchSpec& arch) {
  nlohmann::json j;
  j["name"] = arch.name;
  j["input_shape"] = arch.input_shape;
  auto conv_j = [](const ConvSpec& c) {
    return nlohmann::json{{"out_ch", c.out_ch}, {"k", c.k},           {"stride", c.stride},
                          {"pad", c.pad},       {"norm", c.has_norm}, {"relu", c.has_relu}};
  };
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : arch.layers) {
    nlohmann::json lj;
    switch (l.kind) {
      case LayerKind::Conv:
        lj = {{"kind", "conv"}, {"conv", conv_j(l.conv)}};
        break;
      case LayerKind::MaxPool:
        lj = {{"kind", "maxpool"}, {"k", l.pool_k}, {"stride", l.pool_stride}};
        break;
      case LayerKind::ResidualBlock: {
        nlohmann::json convs = nlohmann::json::array();
        for (const auto& c : l.block) convs.push_back(conv_j(c));
        lj = {{"kind", "block"}, {"convs", convs}};
        lj["shortcut"] = l.shortcut ? conv_j(*l.shortcut) : nlohmann::json(nullptr);
        break;
      }
      case LayerKind::GlobalAvgPool:
        lj = {{"kind", "gap"}};
        break;
      case LayerKind::Head:
        lj = {{"kind", "head"}, {"classes", l.head_classes}};
        break;
    }
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j;
}

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  auto conv_f = [](const nlohmann::json& c) {
    ConvSpec s;
    s.out_ch = c.at("out_ch").get<int>();
    s.k = c.at("k").get<int>();
    s.stride = c.at("stride").get<int>();
    s.pad = c.at("pad").get<int>();
    s.has_norm = c.at("norm").get<bool>();
    s.has_relu = c.at("relu").get<bool>();
    return s;
  };
  ArchSpec a;
  try {
    a.name = j.at("name").get<std::string>();
    a.input_shape = j.at("input_shape").get<std::array<int, 3>>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      const std::string kind = lj.at("kind").get<std::string>();
      if (kind == "conv") {
        l.kind = LayerKind::Conv;
        l.conv = conv_f(lj.at("conv"));
      } else if (kind == "maxpool") {
        l.kind = LayerKind::MaxPool;
        l.pool_k = lj.at("k").get<int>();
        l.pool_stride = lj.at("stride").get<int>();
      } else if (kind == "block") {
        l.kind = LayerKind::ResidualBlock;
        for (const auto& c : lj.at("convs")) l.block.push_back(conv_f(c));
        if (!lj.at("shortcut").is_null()) l.shortcut = conv_f(lj.at("shortcut"));
      } else if (kind == "gap") {
        l.kind = LayerKind::GlobalAvgPool;
      } else if (kind == "head") {
        l.kind = LayerKind::Head;
        l.head_classes = lj.at("classes").get<int>();
      } else {
        throw SpecError("unknown layer kind in arch json: " + kind);
      }
      a.layers.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed arch json: ") + e.what());
  }
  validate(a);
  return a;
}

}  // namespace clr
