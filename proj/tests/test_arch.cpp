#include <gtest/gtest.h>

#include "clr/arch.hpp"
#include "clr/ledger.hpp"

#include "oracle.hpp"

using namespace clr;

namespace {

ArchSpec single_conv_arch(int in_ch, int res, ConvSpec cs, int classes = 10) {
  ArchSpec a;
  a.name = "single";
  a.input_shape = {in_ch, res, res};
  LayerSpec conv;
  conv.kind = LayerKind::Conv;
  conv.conv = cs;
  LayerSpec gap;
  gap.kind = LayerKind::GlobalAvgPool;
  LayerSpec head;
  head.kind = LayerKind::Head;
  head.head_classes = classes;
  a.layers = {conv, gap, head};
  return a;
}

}  // namespace

TEST(Arch, TinynetShape) {
  const auto a = arch_preset("tinynet", 10);
  const auto sites = validate(a);
  ASSERT_EQ(sites.size(), 3u);
  EXPECT_EQ(sites[0].spec.out_ch, 16);
  EXPECT_EQ(sites[1].spec.out_ch, 32);
  EXPECT_EQ(sites[2].spec.out_ch, 64);
  for (const auto& s : sites) EXPECT_EQ(s.spec.k, 3);
  EXPECT_EQ(feature_dim(a), 64);
  EXPECT_EQ(head_classes(a), 10);
}

TEST(Arch, Resnet18LiteShape) {
  const auto a = arch_preset("resnet18-lite", 7);
  const auto sites = validate(a);
  // stem + 8 blocks x 2 convs + 3 projection shortcuts
  ASSERT_EQ(sites.size(), 20u);
  int shortcuts = 0;
  for (const auto& s : sites) shortcuts += s.is_shortcut ? 1 : 0;
  EXPECT_EQ(shortcuts, 3);
  EXPECT_EQ(feature_dim(a), 128);
  EXPECT_EQ(head_classes(a), 7);
}

TEST(Arch, Resnet50MatchesFlatLayerTable) {
  const auto sites = validate(arch_preset("resnet50-shape", 1000));
  const auto table = oracle::resnet50_convs();
  ASSERT_EQ(sites.size(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(sites[i].in_ch, table[i].cin) << "row " << i << " (" << table[i].path << ")";
    EXPECT_EQ(sites[i].spec.out_ch, table[i].cout) << "row " << i;
    EXPECT_EQ(sites[i].spec.k, table[i].k) << "row " << i;
    const bool oracle_sc = table[i].path.size() >= 3 &&
                           table[i].path.compare(table[i].path.size() - 3, 3, ".sc") == 0;
    EXPECT_EQ(sites[i].is_shortcut, oracle_sc) << "row " << i;
  }
}

TEST(Arch, Resnet50FrozenTotal) {
  const auto led = count_parameters(arch_preset("resnet50-shape", 1000), ClrVariant::Standard,
                                    /*include_head=*/false, 1000);
  const auto ref = oracle::resnet50_counts(1000);
  EXPECT_EQ(led.frozen_total(), ref.frozen_total);
  EXPECT_EQ(led.frozen_total(), 25557032);
}

TEST(Arch, Resnet50ClrTotalsPerVariant) {
  const auto a = arch_preset("resnet50-shape", 1000);
  const auto ref = oracle::resnet50_counts(1000);
  const auto standard = count_parameters(a, ClrVariant::Standard, false, 1000);
  const auto full = count_parameters(a, ClrVariant::Full, false, 1000);
  const auto reduced = count_parameters(a, ClrVariant::Reduced, false, 1000);
  const auto mixed = count_parameters(a, ClrVariant::Mixed, false, 1000);
  EXPECT_EQ(standard.clr_total(), ref.clr_standard);
  EXPECT_EQ(standard.clr_total(), 34560);
  EXPECT_EQ(full.clr_total(), ref.clr_full);
  EXPECT_EQ(reduced.clr_total(), ref.clr_reduced);
  EXPECT_EQ(mixed.clr_total(), ref.clr_mixed);
  EXPECT_GE(full.clr_total(), standard.clr_total());
  EXPECT_GE(full.clr_total(), reduced.clr_total());
}

TEST(Arch, AttachmentCountsPerVariant) {
  const auto sites = validate(arch_preset("resnet50-shape", 1000));
  const auto ref = oracle::resnet50_counts(1000);
  int std_n = 0, full_n = 0, red_n = 0;
  for (const auto& s : sites) {
    if (attachment_kernel(ClrVariant::Standard, s.spec.k) > 0) ++std_n;
    if (attachment_kernel(ClrVariant::Full, s.spec.k) > 0) ++full_n;
    if (attachment_kernel(ClrVariant::Reduced, s.spec.k) > 0) ++red_n;
  }
  EXPECT_EQ(std_n, ref.attach_standard);
  EXPECT_EQ(full_n, ref.attach_full);
  EXPECT_EQ(red_n, ref.attach_reduced);
  EXPECT_EQ(full_n, static_cast<int>(sites.size()));
  EXPECT_EQ(red_n, static_cast<int>(sites.size()));
}

TEST(Arch, TinynetStandardClrParams) {
  const auto led =
      count_parameters(arch_preset("tinynet", 10), ClrVariant::Standard, false, 10);
  EXPECT_EQ(led.clr_total(), 9 * (16 + 32 + 64));  // 1008
}

TEST(Arch, HeadRowRespectsIncludeFlag) {
  const auto a = arch_preset("tinynet", 10);
  const auto with = count_parameters(a, ClrVariant::Standard, true, 5);
  const auto without = count_parameters(a, ClrVariant::Standard, false, 5);
  EXPECT_EQ(with.clr_total() - without.clr_total(), 64 * 5 + 5);
  EXPECT_EQ(with.frozen_total(), without.frozen_total());
}

TEST(Arch, InvalidSpecsAreRejected) {
  EXPECT_THROW(arch_preset("resnet99", 10), SpecError);
  EXPECT_THROW(arch_preset("tinynet", 0), SpecError);

  ArchSpec no_head = single_conv_arch(1, 8, {4, 3, 1, 1});
  no_head.layers.pop_back();
  EXPECT_THROW(validate(no_head), SpecError);

  ArchSpec no_gap = single_conv_arch(1, 8, {4, 3, 1, 1});
  no_gap.layers.erase(no_gap.layers.begin() + 1);
  EXPECT_THROW(validate(no_gap), SpecError);

  // (8 - 2) / 2 is integral but (8 + 0 - 3) / 2 is not
  EXPECT_THROW(validate(single_conv_arch(1, 8, {4, 3, 2, 0})), SpecError);

  ArchSpec after_gap = single_conv_arch(1, 8, {4, 3, 1, 1});
  std::swap(after_gap.layers[0], after_gap.layers[1]);
  EXPECT_THROW(validate(after_gap), SpecError);

  ArchSpec bad_block;
  bad_block.name = "bad";
  bad_block.input_shape = {4, 8, 8};
  LayerSpec blk;
  blk.kind = LayerKind::ResidualBlock;
  blk.block = {ConvSpec{8, 3, 1, 1}};  // identity shortcut but 4 != 8 channels
  LayerSpec gap;
  gap.kind = LayerKind::GlobalAvgPool;
  LayerSpec head;
  head.kind = LayerKind::Head;
  head.head_classes = 2;
  bad_block.layers = {blk, gap, head};
  EXPECT_THROW(validate(bad_block), SpecError);

  ArchSpec empty;
  empty.name = "empty";
  empty.input_shape = {1, 8, 8};
  EXPECT_THROW(validate(empty), SpecError);
}

TEST(Arch, JsonRoundTripAllPresets) {
  for (const char* name : {"tinynet", "resnet18-lite", "resnet50-shape"}) {
    const auto a = arch_preset(name, 13);
    const auto back = arch_from_json(arch_to_json(a));
    EXPECT_EQ(a, back) << name;
  }
}

TEST(Arch, MalformedJsonIsRejected) {
  auto j = arch_to_json(arch_preset("tinynet", 10));
  j["layers"][0].erase("conv");
  EXPECT_THROW(arch_from_json(j), FormatError);

  auto j2 = arch_to_json(arch_preset("tinynet", 10));
  j2["layers"][0]["kind"] = "transformer";
  EXPECT_THROW(arch_from_json(j2), SpecError);
}

TEST(Arch, FlopRatioOnSingleConv) {
  // 64-channel 3x3 conv at 56x56: the reprogram pass costs 1/64 of the conv.
  const auto a = single_conv_arch(64, 56, {64, 3, 1, 1});
  const auto est = flop_estimate(a, ClrVariant::Standard);
  EXPECT_EQ(est.base_macs, 64LL * 64 * 9 * 56 * 56);
  EXPECT_EQ(est.clr_macs, 9LL * 64 * 56 * 56);
  EXPECT_DOUBLE_EQ(est.ratio(), 1.0 / 64.0);
}

TEST(Arch, OneByOneConvFlopsByVariant) {
  const auto a = single_conv_arch(8, 6, {8, 1, 1, 0});
  EXPECT_EQ(flop_estimate(a, ClrVariant::Standard).clr_macs, 0);
  EXPECT_EQ(flop_estimate(a, ClrVariant::Mixed).clr_macs, 0);
  EXPECT_EQ(flop_estimate(a, ClrVariant::Reduced).clr_macs, 1LL * 8 * 6 * 6);
  EXPECT_EQ(flop_estimate(a, ClrVariant::Full).clr_macs, 9LL * 8 * 6 * 6);
}

TEST(Arch, FullFlopsDominateStandard) {
  for (const char* name : {"tinynet", "resnet18-lite", "resnet50-shape"}) {
    const auto a = arch_preset(name, 10);
    EXPECT_GE(flop_estimate(a, ClrVariant::Full).clr_macs,
              flop_estimate(a, ClrVariant::Standard).clr_macs)
        << name;
  }
}
