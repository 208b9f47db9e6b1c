// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "cmae/masking.hpp"
#include "cmae/model.hpp"
#include "cmae/rng.hpp"

namespace cmae::testing {

/// 8x8 single-channel images in 2x2 patches (16 tokens), narrow widths.
inline ModelConfig tiny_config(DecoderVariant variant, std::size_t decoder_depth = 2, std::size_t encoder_depth = 2) {
  ModelConfig c = make_model_config(variant);
  c.encoder.image_size = 8;
  c.encoder.patch_size = 2;
  c.encoder.channels = 1;
  c.encoder.dim = 8;
  c.encoder.depth = encoder_depth;
  c.encoder.heads = 2;
  c.encoder.mlp_ratio = 2.0;
  c.decoder.dim = 8;
  c.decoder.depth = decoder_depth;
  c.decoder.heads = 2;
  c.decoder.mlp_ratio = 2.0;
  return c;
}

template <typename T>
Tensor<T> random_patches(const ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<T> v(batch * c.encoder.num_patches() * c.encoder.patch_dim());
  for (auto& x : v) x = static_cast<T>(rng.uniform());
  return Tensor<T>({batch, c.encoder.num_patches(), c.encoder.patch_dim()}, std::move(v));
}

inline std::vector<MaskPlan> random_plans(std::size_t n, std::size_t batch, double p, double gamma,
                                          std::uint64_t seed) {
  std::vector<MaskPlan> plans;
  for (std::size_t b = 0; b < batch; ++b) plans.push_back(make_mask_plan(n, p, gamma, derive_seed({seed, b})));
  return plans;
}

/// Gives every parameter non-trivial values (LayerNorm gains away from 1,
/// biases away from 0) so no gradient path is degenerate.
template <typename T>
void perturb_parameters(const MaskedAutoencoder<T>& model, std::uint64_t seed, double scale = 0.3) {
  CounterRng rng(seed);
  for (const auto& p : model.parameters()) {
    Tensor<T> shared = p.tensor;
    auto values = shared.mutable_data();
    for (auto& v : values) v = static_cast<T>(v + scale * (2.0 * rng.uniform() - 1.0));
  }
}

}  // namespace cmae::testing
