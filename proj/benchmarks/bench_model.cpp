// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "cmae/model.hpp"
#include "cmae/rng.hpp"

namespace {

using cmae::DecoderVariant;

cmae::ModelConfig desk(DecoderVariant v) {
  cmae::ModelConfig c = cmae::make_model_config(v);
  c.encoder.image_size = 32;
  c.encoder.patch_size = 4;
  c.encoder.dim = 64;
  c.encoder.depth = 4;
  c.encoder.heads = 4;
  c.decoder.dim = 32;
  c.decoder.depth = 4;
  c.decoder.heads = 4;
  return c;
}

cmae::Tensor<float> patches(const cmae::ModelConfig& c, std::size_t batch) {
  cmae::CounterRng rng(1);
  std::vector<float> v(batch * c.encoder.num_patches() * c.encoder.patch_dim());
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  return cmae::Tensor<float>({batch, c.encoder.num_patches(), c.encoder.patch_dim()}, std::move(v));
}

std::vector<cmae::MaskPlan> plans(std::size_t n, std::size_t batch, double gamma) {
  std::vector<cmae::MaskPlan> out;
  for (std::size_t b = 0; b < batch; ++b) out.push_back(cmae::make_mask_plan(n, 0.75, gamma, b + 1));
  return out;
}

void BM_MultiHeadAttention(benchmark::State& state) {
  const auto lq = static_cast<std::size_t>(state.range(0));
  const auto lkv = static_cast<std::size_t>(state.range(1));
  cmae::CounterRng rng(2);
  const cmae::MultiHeadAttention<float> mha(32, 64, 4, rng);
  std::vector<float> q(32 * lq * 32), kv(32 * lkv * 64);
  for (auto& x : q) x = static_cast<float>(rng.uniform());
  for (auto& x : kv) x = static_cast<float>(rng.uniform());
  const cmae::Tensor<float> queries({32, lq, 32}, q);
  const cmae::Tensor<float> context({32, lkv, 64}, kv);
  cmae::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(mha(queries, context));
}
// Self-attention over 1+N tokens against cross-attention from the masked
// queries to the class token plus visible tokens.
BENCHMARK(BM_MultiHeadAttention)->Args({65, 65})->Args({48, 17})->Args({16, 17})->Unit(benchmark::kMillisecond);

// One training step (forward + backward) on a 32-image batch.
void BM_TrainStep(benchmark::State& state) {
  const auto variant = static_cast<DecoderVariant>(state.range(0));
  const double gamma = static_cast<double>(state.range(1)) / 100.0;
  const auto c = desk(variant);
  const cmae::MaskedAutoencoder<float> model(c, 3);
  const auto x = patches(c, 32);
  const auto p = plans(c.encoder.num_patches(), 32, gamma);
  const auto params = model.parameters();
  for (auto _ : state) {
    for (auto prm : params) prm.tensor.zero_grad();
    const auto loss = model.loss(x, p);
    loss.backward();
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 32));
  state.SetLabel(std::string(cmae::variant_name(variant)));
}
BENCHMARK(BM_TrainStep)
    ->Args({static_cast<int>(DecoderVariant::SelfAttn), 75})
    ->Args({static_cast<int>(DecoderVariant::CrossAttn), 75})
    ->Args({static_cast<int>(DecoderVariant::CrossAttn), 25})
    ->Args({static_cast<int>(DecoderVariant::CrossPlusSelf), 75})
    ->Unit(benchmark::kMillisecond);

// Decoder only, on cached encoder features.
void BM_Decode(benchmark::State& state) {
  const auto variant = static_cast<DecoderVariant>(state.range(0));
  const double gamma = static_cast<double>(state.range(1)) / 100.0;
  auto c = desk(variant);
  c.decoder.depth = static_cast<std::size_t>(state.range(2));
  const cmae::MaskedAutoencoder<float> model(c, 4);
  const auto x = patches(c, 32);
  const auto p = plans(c.encoder.num_patches(), 32, gamma);
  cmae::NoGradGuard no_grad;
  const auto feats = model.encode(x, p);
  for (auto _ : state) benchmark::DoNotOptimize(model.decode(feats, p));
  state.SetLabel(std::string(cmae::variant_name(variant)));
}
BENCHMARK(BM_Decode)
    ->Args({static_cast<int>(DecoderVariant::SelfAttn), 75, 8})
    ->Args({static_cast<int>(DecoderVariant::CrossAttn), 25, 12})
    ->Args({static_cast<int>(DecoderVariant::CrossAttn), 75, 12})
    ->Unit(benchmark::kMillisecond);

}  // namespace
