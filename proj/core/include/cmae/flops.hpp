// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytical compute model. A multiply-add counts as 2 FLOPs; projections,
// attention scores, attention-weighted sums, MLPs and the head are counted;
// softmax, LayerNorm, GELU and residual adds are ignored.

#pragma once

#include <cstdint>
#include <string>

#include "cmae/decoder.hpp"

namespace cmae {

/// One attention step with `lq` queries of width `dim` over `lkv` keys whose
/// input width is `kv_dim`: Q and output projections 2*lq*dim^2 each, K and
/// V projections 2*lkv*kv_dim*dim each, scores plus weighted sum
/// 4*lq*lkv*dim.
std::uint64_t attention_flops(std::uint64_t lq, std::uint64_t lkv, std::uint64_t dim, std::uint64_t kv_dim);

/// Two-layer MLP with hidden width round(mlp_ratio * dim): 4*l*dim*hidden.
std::uint64_t mlp_flops(std::uint64_t l, std::uint64_t dim, double mlp_ratio);

struct FlopsReport {
  std::uint64_t encoder = 0;
  /// Self-attention decoder only: the linear map from encoder to decoder
  /// width, applied to the class token and visible tokens.
  std::uint64_t decoder_embed = 0;
  std::uint64_t decoder_attention = 0;
  std::uint64_t decoder_mlp = 0;
  std::uint64_t head = 0;
  /// Inter-block fusion: k*D*Lkv*enc_dim weighted adds.
  std::uint64_t fusion = 0;

  // Configuration echo.
  std::string variant;
  std::uint64_t num_patches = 0;
  std::uint64_t visible = 0;
  std::uint64_t queries = 0;
  std::uint64_t encoder_dim = 0;
  std::uint64_t decoder_dim = 0;
  std::uint64_t decoder_depth = 0;
  std::uint64_t fused_maps = 0;
  double mask_ratio = 0.0;
  double pred_ratio = 0.0;

  std::uint64_t decoder() const { return decoder_embed + decoder_attention + decoder_mlp + head + fusion; }
  std::uint64_t total() const { return encoder + decoder(); }
};

/// Per image. The self-attention decoder runs over 1+N tokens and projects
/// N patches; the cross decoders run floor(gamma*N) queries over 1+|visible|
/// keys and values.
FlopsReport count_flops(const EncoderConfig& encoder, const DecoderConfig& decoder, double mask_ratio,
                        double pred_ratio);

/// Text header describing the counting convention.
std::string flops_convention();

}  // namespace cmae
