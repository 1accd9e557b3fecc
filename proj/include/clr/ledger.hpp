#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clr/adapter.hpp"
#include "clr/arch.hpp"

// Parameter and compute accounting. Everything is re-derived from the
// ArchSpec on demand; totals and ratios are computed from the rows and never
// stored separately.

namespace clr {

struct LedgerRow {
  std::string path;
  std::int64_t frozen_params = 0;  // conv weight + bias or norm affine
  std::int64_t clr_params = 0;     // reprogram kernels (+ blend scalar)
};

struct ParameterLedger {
  std::string arch_name;
  ClrVariant variant = ClrVariant::Standard;
  bool includes_head = false;
  int head_num_classes = 0;
  std::vector<LedgerRow> rows;

  std::int64_t frozen_total() const {
    std::int64_t t = 0;
    for (const auto& r : rows) t += r.frozen_params;
    return t;
  }
  std::int64_t clr_total() const {
    std::int64_t t = 0;
    for (const auto& r : rows) t += r.clr_params;
    return t;
  }
  double ratio() const {
    const auto f = frozen_total();
    return f == 0 ? 0.0 : static_cast<double>(clr_total()) / static_cast<double>(f);
  }
};

// One row per conv site plus one for the head. The frozen column counts the
// backbone (conv weights, biases where present, norm gamma/beta, its own
// head); the clr column counts one adapter (k^2 per channel at each attached
// site, +1 for a Mixed blend, + a num_classes head when included). Running
// norm statistics are not parameters and are not counted.
inline ParameterLedger count_parameters(const ArchSpec& arch, ClrVariant variant,
                                        bool include_head, int num_classes) {
  const auto sites = validate(arch);
  ParameterLedger led;
  led.arch_name = arch.name;
  led.variant = variant;
  led.includes_head = include_head;
  led.head_num_classes = num_classes;
  for (const auto& site : sites) {
    LedgerRow row;
    row.path = site.path;
    const auto& cs = site.spec;
    row.frozen_params = static_cast<std::int64_t>(cs.out_ch) * site.in_ch * cs.k * cs.k +
                        (cs.has_norm ? 2 * cs.out_ch : cs.out_ch);
    const int ck = attachment_kernel(variant, cs.k);
    if (ck > 0) {
      row.clr_params = static_cast<std::int64_t>(ck) * ck * cs.out_ch;
      if (variant == ClrVariant::Mixed) row.clr_params += 1;
    }
    led.rows.push_back(std::move(row));
  }
  LedgerRow head;
  head.path = "head";
  const std::int64_t feat = feature_dim(arch);
  head.frozen_params = feat * head_classes(arch) + head_classes(arch);
  if (include_head) head.clr_params = feat * num_classes + num_classes;
  led.rows.push_back(std::move(head));
  return led;
}

/// Total element count across one adapter's trainable tensors (head always
/// included; norm affine overrides included when present).
inline std::int64_t adapter_param_count(const TaskAdapter& a) {
  std::int64_t t = 0;
  for (const auto& [path, layer] : a.layers) {
    t += layer.kernels->numel();
    if (layer.blend) t += layer.blend->numel();
  }
  for (const auto& [path, gb] : a.norm_affine)
    t += gb.first->numel() + gb.second->numel();
  t += a.head_w->numel() + a.head_b->numel();
  return t;
}

struct FlopEstimate {
  std::int64_t base_macs = 0;
  std::int64_t clr_macs = 0;
  double ratio() const {
    return base_macs == 0 ? 0.0 : static_cast<double>(clr_macs) / static_cast<double>(base_macs);
  }
};

// Multiply-accumulate counts at the arch's input resolution, convs only
// (pooling, norm, and the head are negligible next to the convs and are
// excluded on both sides). A CLR attachment costs k^2 * c per output pixel
// of the conv it follows.
inline FlopEstimate flop_estimate(const ArchSpec& arch, ClrVariant variant) {
  FlopEstimate est;
  for (const auto& site : validate(arch)) {
    const auto& cs = site.spec;
    const std::int64_t pixels = static_cast<std::int64_t>(site.out_h) * site.out_w;
    est.base_macs += static_cast<std::int64_t>(cs.out_ch) * site.in_ch * cs.k * cs.k * pixels;
    const int ck = attachment_kernel(variant, cs.k);
    if (ck > 0) est.clr_macs += static_cast<std::int64_t>(ck) * ck * cs.out_ch * pixels;
  }
  return est;
}

}  // namespace clr
