// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <ostream>

#include "cmae/analysis.hpp"
#include "cmae/errors.hpp"
#include "cmae/flops.hpp"
#include "fixtures.hpp"

namespace cmae {
namespace {

using testing::random_patches;
using testing::random_plans;
using testing::tiny_config;

// Two patch tokens plus the class token. Token 0 visible, token 1 masked.
TEST(AttentionGroupMeans, HandComputedThreeTokenMap) {
  MaskPlan plan;
  plan.num_tokens = 2;
  plan.visible = {0};
  plan.masked = {1};
  plan.predicted = {1};
  // Rows: cls, patch 0, patch 1. Only the masked row (patch 1) is read.
  const std::vector<double> map = {0.2, 0.3, 0.5,  //
                                   0.1, 0.1, 0.8,  //
                                   0.25, 0.15, 0.6};
  const GroupMeans g = attention_group_means(map, plan);
  EXPECT_DOUBLE_EQ(g.mask_to_mask, 0.6);
  // Class column counts as visible: (0.25 + 0.15) / 2 keys.
  EXPECT_DOUBLE_EQ(g.mask_to_visible, 0.2);
}

TEST(AttentionGroupMeans, RejectsWrongMapSize) {
  const MaskPlan plan = make_mask_plan(4, 0.5, 0.5, 1);
  EXPECT_THROW(attention_group_means(std::vector<double>(16, 0.0), plan), ConfigError);
}

// Size-weighted group means add back up to a full softmax row.
TEST(AttentionGroupMeans, SizeWeightedMeansSumToOne) {
  const auto c = tiny_config(DecoderVariant::SelfAttn);
  const MaskedAutoencoder<double> model(c, 11);
  const auto patches = random_patches<double>(c, 2, 12);
  const auto plans = random_plans(16, 2, 0.75, 0.75, 13);
  DecodeTrace<double> trace;
  trace.record_attention = true;
  model.predict(patches, plans, &trace);
  const std::size_t len = 17;
  for (const auto& probs : trace.attention) {
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t h = 0; h < c.decoder.heads; ++h) {
        const double* src = probs.data() + (b * c.decoder.heads + h) * len * len;
        const std::vector<double> map(src, src + len * len);
        const GroupMeans g = attention_group_means(map, plans[b]);
        const double m = static_cast<double>(plans[b].masked.size());
        const double v = static_cast<double>(plans[b].visible.size() + 1);
        EXPECT_NEAR(m * g.mask_to_mask + v * g.mask_to_visible, 1.0, 1e-4);
      }
    }
  }
}

TEST(AttentionStats, RandomInitGroupsAreClose) {
  const auto c = tiny_config(DecoderVariant::SelfAttn);
  const MaskedAutoencoder<float> model(c, 21);
  const auto patches = random_patches<float>(c, 32, 22);
  const AttentionStats s = attention_stats(model, patches, 0.75, 23);
  EXPECT_EQ(s.images_seen, 32u);
  EXPECT_EQ(s.seq_len, 17u);
  EXPECT_LT(std::abs(s.per_pair_times_seqlen.mask_to_visible - s.per_pair_times_seqlen.mask_to_mask), 0.2);
  EXPECT_NEAR(s.per_pair_times_seqlen.mask_to_mask, s.per_pair.mask_to_mask * 17.0, 1e-12);
}

TEST(AttentionStats, RejectsCrossVariant) {
  const auto c = tiny_config(DecoderVariant::CrossAttn);
  const MaskedAutoencoder<float> model(c, 1);
  EXPECT_THROW(attention_stats(model, random_patches<float>(c, 2, 2), 0.75, 3), ConfigError);
}

struct DecompCase {
  DecoderVariant variant;
  std::size_t depth;
};

void PrintTo(const DecompCase& c, std::ostream* os) { *os << variant_name(c.variant) << "/D" << c.depth; }

class DecompositionTest : public ::testing::TestWithParam<DecompCase> {};

TEST_P(DecompositionTest, TermsSumToReconstruction) {
  const auto [variant, depth] = GetParam();
  const auto c = tiny_config(variant, depth);
  const MaskedAutoencoder<float> model(c, 31 + depth);
  testing::perturb_parameters(model, 32 + depth, 0.2);
  const auto patches = random_patches<float>(c, 3, 33);
  const auto plans = random_plans(16, 3, 0.75, 0.5, 34);
  const auto stacks = per_block_decomposition(model, patches, plans);
  ASSERT_EQ(stacks.size(), 3u);

  NoGradGuard no_grad;
  const Tensor<float> pred = model.predict(patches, plans);
  for (std::size_t b = 0; b < stacks.size(); ++b) {
    const auto& s = stacks[b];
    EXPECT_EQ(s.contributions.size(), depth);
    EXPECT_LT(s.identity_error, 1e-5);
    // Independent of the stack's own bookkeeping: recompute the sum.
    std::vector<double> sum = s.base;
    for (const auto& term : s.contributions) {
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += term[i];
    }
    const std::size_t rows = s.rows.size();
    const std::size_t pd = s.patch_dim;
    const std::size_t out_rows = pred.dim(1);
    ASSERT_EQ(rows, out_rows);
    double err = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < pd; ++k) {
        err = std::max(err, std::abs(sum[r * pd + k] - pred.data()[(b * out_rows + r) * pd + k]));
      }
    }
    EXPECT_LT(err, 1e-5);
  }
}

std::vector<DecompCase> decomposition_cases() {
  std::vector<DecompCase> out;
  for (auto v : {DecoderVariant::SelfAttn, DecoderVariant::CrossAttn, DecoderVariant::CrossPlusSelf}) {
    for (std::size_t d : {1, 4, 8, 12}) out.push_back({v, d});
  }
  return out;
}

INSTANTIATE_TEST_SUITE_P(AllVariants, DecompositionTest, ::testing::ValuesIn(decomposition_cases()),
                         [](const auto& info) {
                           return std::string(variant_name(info.param.variant)) + "_D" +
                                  std::to_string(info.param.depth);
                         });

TEST(Decomposition, ZeroDepthIsBaseOnly) {
  for (auto v : {DecoderVariant::SelfAttn, DecoderVariant::CrossAttn}) {
    const auto c = tiny_config(v, 0);
    const MaskedAutoencoder<float> model(c, 41);
    const auto patches = random_patches<float>(c, 2, 42);
    const auto stacks = per_block_decomposition(model, patches, random_plans(16, 2, 0.75, 0.75, 43));
    for (const auto& s : stacks) {
      EXPECT_TRUE(s.contributions.empty());
      for (std::size_t i = 0; i < s.base.size(); ++i) EXPECT_NEAR(s.base[i], s.total[i], 1e-5);
    }
  }
}

TEST(Decomposition, DenormalizedKeepsIdentity) {
  const auto c = tiny_config(DecoderVariant::CrossAttn, 3);
  const MaskedAutoencoder<float> model(c, 51);
  const auto patches = random_patches<float>(c, 1, 52);
  const auto stacks = per_block_decomposition(model, patches, random_plans(16, 1, 0.75, 0.75, 53));
  const auto stats = patch_normalize(patches).stats;
  const auto d = stacks[0].denormalized(stats);
  for (std::size_t i = 0; i < d.total.size(); ++i) {
    double sum = d.base[i];
    for (const auto& t : d.contributions) sum += t[i];
    EXPECT_NEAR(sum, d.total[i], 1e-5);
  }
}

TEST(HighPass, ConstantImageHasNoHighFrequency) {
  EXPECT_NEAR(high_pass_fraction(std::vector<double>(4 * 4 * 3, 0.7), 4, 4, 3), 0.0, 1e-12);
  EXPECT_EQ(high_pass_fraction(std::vector<double>(4 * 4, 0.0), 4, 4, 1), 0.0);
}

TEST(HighPass, CheckerboardIsBounded) {
  std::vector<double> img(6 * 6);
  for (std::size_t y = 0; y < 6; ++y) {
    for (std::size_t x = 0; x < 6; ++x) img[y * 6 + x] = (x + y) % 2 == 0 ? 1.0 : -1.0;
  }
  const double f = high_pass_fraction(img, 6, 6, 1);
  EXPECT_GT(f, 0.5);
  EXPECT_LE(f, 1.0);
}

TEST(InterBlockWeights, OneHotRowsStayOneHot) {
  const Tensor<float> w({3, 4}, {0, 0, 2, 0,  //
                                 -1, 0, 0, 0,  //
                                 0, 0, 0, 5});
  const auto map = interblock_weight_map(w, true);
  const std::vector<double> expected = {0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 1};
  EXPECT_EQ(map, expected);
  const auto raw = interblock_weight_map(w, false);
  EXPECT_EQ(raw[4], 1.0);
  EXPECT_EQ(raw[11], 5.0);
  EXPECT_EQ(weight_centroids(map, 3, 4), (std::vector<double>{2, 0, 3}));
}

TEST(InterBlockWeights, SingleMapRejected) {
  EXPECT_THROW(interblock_weight_map(Tensor<float>({3, 1}, {1, 1, 1}), false), ConfigError);
  EXPECT_THROW(interblock_weight_map(Tensor<float>(), false), ConfigError);
}

TEST(InterBlockWeights, InitStdNearInverseRootK) {
  auto c = tiny_config(DecoderVariant::CrossAttn, 12, 8);
  const MaskedAutoencoder<float> model(c, 61);
  const auto& w = model.cross_decoder.fusion.weight;
  const std::size_t k = w.dim(1);
  ASSERT_EQ(k, 9u);
  const auto v = w.data();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (float x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size() - 1));
  EXPECT_NEAR(sd, 1.0 / std::sqrt(static_cast<double>(k)), 0.3 / std::sqrt(static_cast<double>(k)));
}

TEST(Spearman, KnownValues) {
  const std::vector<double> x = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{4, 3, 2, 1}), -1.0);
  // Ties get average ranks: y ranks (0.5, 0.5, 2, 3) against (0, 1, 2, 3).
  const double r = spearman(x, std::vector<double>{1, 1, 2, 3});
  EXPECT_NEAR(r, 4.5 / std::sqrt(5.0 * 4.5), 1e-12);
}

// Walks every multiply-add of one pre-norm block the way a naive
// implementation would execute it.
std::uint64_t naive_block_flops(std::uint64_t lq, std::uint64_t lkv, std::uint64_t d, std::uint64_t hidden) {
  std::uint64_t macs = 0;
  auto linear = [&](std::uint64_t rows, std::uint64_t in, std::uint64_t out) {
    for (std::uint64_t r = 0; r < rows; ++r)
      for (std::uint64_t o = 0; o < out; ++o)
        for (std::uint64_t i = 0; i < in; ++i) ++macs;
  };
  linear(lq, d, d);   // Q
  linear(lkv, d, d);  // K
  linear(lkv, d, d);  // V
  for (std::uint64_t q = 0; q < lq; ++q)
    for (std::uint64_t k = 0; k < lkv; ++k)
      for (std::uint64_t c = 0; c < d; ++c) ++macs;  // scores
  for (std::uint64_t q = 0; q < lq; ++q)
    for (std::uint64_t c = 0; c < d; ++c)
      for (std::uint64_t k = 0; k < lkv; ++k) ++macs;  // weighted sum
  linear(lq, d, d);       // output projection
  linear(lq, d, hidden);  // MLP up
  linear(lq, hidden, d);  // MLP down
  return 2 * macs;
}

TEST(Flops, TinyBlockMatchesNaiveCount) {
  EXPECT_EQ(naive_block_flops(2, 3, 4, 4), 544u);
  EXPECT_EQ(attention_flops(2, 3, 4, 4) + mlp_flops(2, 4, 1.0), naive_block_flops(2, 3, 4, 4));
}

EncoderConfig vit_b() {
  EncoderConfig e;
  e.image_size = 224;
  e.patch_size = 16;
  e.channels = 3;
  e.dim = 768;
  e.depth = 12;
  e.heads = 12;
  return e;
}

DecoderConfig dec(DecoderVariant v, std::size_t depth, std::size_t dim = 512) {
  DecoderConfig d;
  d.variant = v;
  d.dim = dim;
  d.depth = depth;
  d.heads = 16;
  return d;
}

TEST(Flops, SelfVsCrossRatioAtVitBase) {
  const auto mae = count_flops(vit_b(), dec(DecoderVariant::SelfAttn, 8), 0.75, 0.75);
  const auto cross = count_flops(vit_b(), dec(DecoderVariant::CrossAttn, 12), 0.75, 0.25);
  EXPECT_EQ(mae.num_patches, 196u);
  EXPECT_EQ(mae.visible, 49u);
  EXPECT_EQ(cross.queries, 49u);
  const double ratio = static_cast<double>(mae.decoder()) / static_cast<double>(cross.decoder());
  EXPECT_GE(ratio, 2.0);
  EXPECT_LE(ratio, 3.0);
  EXPECT_EQ(mae.encoder, cross.encoder);
}

TEST(Flops, ZeroDepthLeavesOnlyTheHead) {
  for (auto v : {DecoderVariant::CrossAttn, DecoderVariant::CrossPlusSelf}) {
    const auto r = count_flops(vit_b(), dec(v, 0), 0.75, 0.5);
    EXPECT_EQ(r.decoder(), r.head);
    EXPECT_GT(r.head, 0u);
  }
  const auto s = count_flops(vit_b(), dec(DecoderVariant::SelfAttn, 0), 0.75, 0.75);
  EXPECT_EQ(s.decoder_attention + s.decoder_mlp + s.fusion, 0u);
  EXPECT_EQ(s.decoder(), s.head + s.decoder_embed);
}

TEST(Flops, EmptyPredictionRejected) {
  EncoderConfig e = vit_b();
  e.image_size = 32;
  e.patch_size = 16;  // 4 patches
  EXPECT_THROW(count_flops(e, dec(DecoderVariant::CrossAttn, 2), 0.75, 0.2), ConfigError);
  EXPECT_THROW(count_flops(vit_b(), dec(DecoderVariant::CrossAttn, 2), 0.5, 0.75), ConfigError);
}

TEST(Flops, MonotoneInDepthRatioWidthAndTokens) {
  for (auto v : {DecoderVariant::SelfAttn, DecoderVariant::CrossAttn, DecoderVariant::CrossPlusSelf}) {
    std::uint64_t prev = 0;
    for (std::size_t depth = 0; depth <= 12; ++depth) {
      const auto f = count_flops(vit_b(), dec(v, depth), 0.75, 0.5).decoder();
      EXPECT_GE(f, prev);
      prev = f;
    }
    prev = 0;
    for (double g : {0.05, 0.1, 0.25, 0.5, 0.75}) {
      const auto f = count_flops(vit_b(), dec(v, 8), 0.75, g).decoder();
      EXPECT_GE(f, prev);
      prev = f;
    }
    prev = 0;
    for (std::size_t dim : {64, 128, 256, 512, 1024}) {
      const auto f = count_flops(vit_b(), dec(v, 8, dim), 0.75, 0.5).decoder();
      EXPECT_GE(f, prev);
      prev = f;
    }
    prev = 0;
    for (std::size_t side : {64, 96, 128, 224, 256}) {
      EncoderConfig e = vit_b();
      e.image_size = side;
      const auto f = count_flops(e, dec(v, 8), 0.75, 0.5).decoder();
      EXPECT_GE(f, prev);
      prev = f;
    }
  }
}

TEST(Flops, FusionCountsWeightedAdds) {
  auto d = dec(DecoderVariant::CrossAttn, 12);
  d.fused_maps = 4;
  const auto r = count_flops(vit_b(), d, 0.75, 0.25);
  EXPECT_EQ(r.fusion, 4u * 12u * 50u * 768u);
  d.fused_maps = 1;
  EXPECT_EQ(count_flops(vit_b(), d, 0.75, 0.25).fusion, 0u);
}

}  // namespace
}  // namespace cmae
