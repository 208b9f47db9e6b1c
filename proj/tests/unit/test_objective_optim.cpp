// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "cmae/errors.hpp"
#include "cmae/objective.hpp"
#include "cmae/optim.hpp"
#include "gradcheck.hpp"
#include "partial_loss.hpp"

namespace cmae {
namespace {

TEST(PatchNormalize, ConstantPatchMapsToZero) {
  const Tensor<double> x({1, 1, 4}, {0.5, 0.5, 0.5, 0.5});
  const auto n = patch_normalize(x);
  for (double v : n.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(PatchNormalize, RowsHaveZeroMeanUnitVariance) {
  const auto x = testing::random_tensor({2, 5, 48}, 1);
  const auto n = patch_normalize(x);
  for (std::size_t r = 0; r < 10; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 48; ++c) m += n.values.data()[r * 48 + c];
    m /= 48;
    for (std::size_t c = 0; c < 48; ++c) v += std::pow(n.values.data()[r * 48 + c] - m, 2);
    v /= 48;
    EXPECT_LT(std::abs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
    EXPECT_GE(n.stats.std[r], 0.0);
  }
}

TEST(PatchNormalize, DenormalizeRoundTrip) {
  const auto x = testing::random_tensor({3, 7, 12}, 2);
  const auto n = patch_normalize(x);
  const auto back = patch_denormalize<double>(n.values.data(), n.stats);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_LT(std::abs(back[i] - x.data()[i]), 1e-6);
  const Tensor<float> xf({1, 4, 3}, {0.1f, 0.9f, 0.4f, 0.2f, 0.2f, 0.2f, 1.0f, 0.0f, 0.5f, 0.7f, 0.3f, 0.6f});
  const auto nf = patch_normalize(xf);
  const auto backf = patch_denormalize<float>(nf.values.data(), nf.stats);
  for (std::size_t i = 0; i < backf.size(); ++i) EXPECT_LT(std::abs(backf[i] - xf.data()[i]), 1e-6f);
}

TEST(MaskedMse, ZeroWhenPredictionMatches) {
  const auto t = testing::random_tensor({2, 16, 4}, 3);
  const MaskPlan plans[] = {make_mask_plan(16, 0.75, 0.5, 1), make_mask_plan(16, 0.75, 0.5, 2)};
  EXPECT_EQ(masked_mse_loss(t, t, plans).item(), 0.0);
}

TEST(MaskedMse, UnitOffsetGivesOne) {
  const auto t = testing::random_tensor({2, 16, 4}, 4);
  const auto p = add(t, Tensor<double>::full({4}, 1.0));
  const MaskPlan plans[] = {make_mask_plan(16, 0.75, 0.5, 1), make_mask_plan(16, 0.75, 0.5, 2)};
  EXPECT_NEAR(masked_mse_loss(p, t, plans).item(), 1.0, 1e-14);
}

TEST(MaskedMse, AcceptsPredictedRowsOnly) {
  const auto t = testing::random_tensor({1, 16, 4}, 5);
  const auto full = testing::random_tensor({1, 16, 4}, 6);
  const MaskPlan plans[] = {make_mask_plan(16, 0.75, 0.25, 7)};
  TokenIndex idx;
  idx.batch = 1;
  idx.rows = plans[0].predicted.size();
  idx.flat = plans[0].predicted;
  const auto rows = gather_rows(full, idx);
  EXPECT_EQ(masked_mse_loss(full, t, plans).item(), masked_mse_loss(rows, t, plans).item());
}

TEST(PartialLoss, ExpectationMatchesFullMaskedLoss) {
  const auto field = testing::make_error_field(196, 8, 0.75, 11);
  const auto s = testing::subset_stats(field, 0.25, 10000, 12);
  EXPECT_NEAR(s.mean / s.full_loss, 1.0, 0.01);
}

TEST(PartialLoss, VarianceMatchesSamplingWithoutReplacement) {
  const auto field = testing::make_error_field(196, 8, 0.75, 13);
  for (double gamma : {0.15, 0.45}) {
    const auto s = testing::subset_stats(field, gamma, 20000, 14);
    EXPECT_NEAR(s.variance / s.exact_variance, 1.0, 0.05) << "gamma " << gamma;
  }
}

TEST(PartialLoss, ResampleKeepsMask) {
  const auto plan = make_mask_plan(64, 0.75, 0.75, 3);
  const auto sub = resample_prediction(plan, 0.25, 9);
  EXPECT_EQ(sub.visible, plan.visible);
  EXPECT_EQ(sub.masked, plan.masked);
  EXPECT_EQ(sub.predicted.size(), 16u);
  EXPECT_TRUE(std::includes(plan.masked.begin(), plan.masked.end(), sub.predicted.begin(), sub.predicted.end()));
  EXPECT_THROW(resample_prediction(plan, 0.8, 1), ConfigError);
}

TEST(ScaledLr, NeutralPointReturnsBase) {
  EXPECT_EQ(scaled_lr(1.5e-4, 256, 0.75, 0.75), 1.5e-4);
  EXPECT_EQ(scaled_lr(3e-4, 256, 0.6, 0.6), 3e-4);
}

TEST(ScaledLr, SupplementSettings) {
  // 0.25 * 1.5e-4 * 4096 / (256 * 0.75) = 8e-4 and 0.75 * ... = 2.4e-3.
  EXPECT_EQ(scaled_lr(1.5e-4, 4096, 0.75, 0.25), 8.0e-4);
  EXPECT_EQ(scaled_lr(1.5e-4, 4096, 0.75, 0.75), 2.4e-3);
}

TEST(ScaledLr, AgreesWithBinaryArithmeticToAnUlp) {
  CounterRng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double base = 1e-5 + rng.uniform() * 1e-2;
    const std::size_t batch = 1 + rng.below(8192);
    const double p = 0.05 + 0.9 * rng.uniform();
    const double g = p * (0.05 + 0.95 * rng.uniform());
    const double binary = g * base * static_cast<double>(batch) / (256.0 * p);
    EXPECT_NEAR(scaled_lr(base, batch, p, g), binary, 4e-16 * binary);
  }
}

TEST(CosineWarmup, Endpoints) {
  EXPECT_EQ(cosine_warmup_lr(0.0, 1e-3, 1.0, 10.0), 0.0);
  EXPECT_DOUBLE_EQ(cosine_warmup_lr(1.0, 1e-3, 1.0, 10.0), 1e-3);
  EXPECT_LE(cosine_warmup_lr(10.0, 1e-3, 1.0, 10.0), 1e-8 * 1e-3);
  EXPECT_DOUBLE_EQ(cosine_warmup_lr(0.5, 1e-3, 1.0, 10.0), 5e-4);
  EXPECT_NEAR(cosine_warmup_lr(5.5, 1e-3, 1.0, 10.0), 5e-4, 1e-15);
}

TEST(CosineWarmup, MonotoneAfterWarmup) {
  double prev = cosine_warmup_lr(1.0, 1.0, 1.0, 30.0);
  for (double e = 1.1; e <= 30.0; e += 0.1) {
    const double lr = cosine_warmup_lr(e, 1.0, 1.0, 30.0);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(OptimConfig, Validation) {
  OptimConfig c;
  EXPECT_NO_THROW(c.validate());
  c.warmup_epochs = 20;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimConfig{};
  c.base_lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimConfig{};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

ParamList<double> scalar_param(double v) { return {{"p", make_param<double>({1}, {v}), true}}; }

TEST(Adam, ZeroGradientsAndNoDecayLeaveParametersUnchanged) {
  auto params = scalar_param(0.7);
  Adam<double> opt(params, AdamConfig{0.9, 0.95, 1e-8, 0.0, true});
  params[0].tensor.mutable_grad()[0] = 0.0;
  for (int i = 0; i < 5; ++i) opt.step(0.1);
  EXPECT_EQ(params[0].tensor.data()[0], 0.7);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto params = scalar_param(1.0);
  Adam<double> opt(params, AdamConfig{0.9, 0.999, 1e-8, 0.0, true});
  params[0].tensor.mutable_grad()[0] = 1.0;
  opt.step(0.1);
  // Bias-corrected m = 1, v = 1: the update is lr * 1 / (1 + eps).
  EXPECT_NEAR(params[0].tensor.data()[0], 1.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, QuadraticBowlConverges) {
  auto params = scalar_param(5.0);
  Adam<double> opt(params, AdamConfig{0.9, 0.999, 1e-8, 0.0, true});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    auto x = params[0].tensor;
    sum(mul(x, x)).backward();
    opt.step(0.1);
  }
  EXPECT_LT(std::abs(params[0].tensor.data()[0]), 1e-2);
}

TEST(Adam, DecoupledDecayShrinksOnlyDecayedParameters) {
  ParamList<double> params{{"w", make_param<double>({1}, {2.0}), true}, {"b", make_param<double>({1}, {2.0}), false}};
  Adam<double> opt(params, AdamConfig{0.9, 0.95, 1e-8, 0.5, true});
  for (auto& p : params) p.tensor.mutable_grad()[0] = 0.0;
  opt.step(0.1);
  EXPECT_DOUBLE_EQ(params[0].tensor.data()[0], 2.0 * (1.0 - 0.1 * 0.5));
  EXPECT_EQ(params[1].tensor.data()[0], 2.0);
}

TEST(Adam, NonFiniteGradientRejectedWithoutUpdating) {
  ParamList<double> params{{"a", make_param<double>({2}, {1.0, 2.0}), true},
                           {"b", make_param<double>({1}, {3.0}), true}};
  Adam<double> opt(params, AdamConfig{});
  params[0].tensor.mutable_grad()[0] = 0.5;
  params[1].tensor.mutable_grad()[0] = std::nan("");
  try {
    opt.step(0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos) << e.what();
  }
  EXPECT_EQ(params[0].tensor.data()[0], 1.0);
  EXPECT_EQ(opt.steps(), 0u);
}

}  // namespace
}  // namespace cmae
