// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/flops.hpp"

#include <cmath>

#include "cmae/errors.hpp"
#include "cmae/masking.hpp"

namespace cmae {

std::uint64_t attention_flops(std::uint64_t lq, std::uint64_t lkv, std::uint64_t dim, std::uint64_t kv_dim) {
  const std::uint64_t projections = 2 * lq * dim * dim + 2 * 2 * lkv * kv_dim * dim + 2 * lq * dim * dim;
  return projections + 4 * lq * lkv * dim;
}

std::uint64_t mlp_flops(std::uint64_t l, std::uint64_t dim, double mlp_ratio) {
  const auto hidden = static_cast<std::uint64_t>(std::lround(static_cast<double>(dim) * mlp_ratio));
  return 4 * l * dim * hidden;
}

FlopsReport count_flops(const EncoderConfig& encoder, const DecoderConfig& decoder, double mask_ratio,
                        double pred_ratio) {
  encoder.validate();
  decoder.validate(encoder);
  if (!(mask_ratio > 0 && mask_ratio < 1) || !(pred_ratio > 0 && pred_ratio <= mask_ratio)) {
    throw ConfigError("count_flops: need 0 < pred ratio <= mask ratio < 1");
  }
  const std::uint64_t n = encoder.num_patches();
  const std::uint64_t masked = ratio_count(mask_ratio, n);
  const std::uint64_t visible = n - masked;
  const std::uint64_t predicted = ratio_count(pred_ratio, n);
  if (predicted == 0) throw ConfigError("count_flops: prediction ratio selects no patches");

  FlopsReport r;
  r.variant = std::string(variant_name(decoder.variant));
  r.num_patches = n;
  r.visible = visible;
  r.encoder_dim = encoder.dim;
  r.decoder_dim = decoder.dim;
  r.decoder_depth = decoder.depth;
  r.mask_ratio = mask_ratio;
  r.pred_ratio = pred_ratio;

  const std::uint64_t enc_tokens = 1 + visible;
  const std::uint64_t ed = encoder.dim;
  r.encoder = 2 * visible * encoder.patch_dim() * ed;
  for (std::size_t i = 0; i < encoder.depth; ++i) {
    r.encoder += attention_flops(enc_tokens, enc_tokens, ed, ed) + mlp_flops(enc_tokens, ed, encoder.mlp_ratio);
  }

  const std::uint64_t d = decoder.dim;
  const std::uint64_t depth = decoder.depth;
  if (decoder.variant == DecoderVariant::SelfAttn) {
    const std::uint64_t len = 1 + n;
    r.queries = n;
    r.fused_maps = 1;
    r.decoder_embed = 2 * enc_tokens * ed * d;
    r.decoder_attention = depth * attention_flops(len, len, d, d);
    r.decoder_mlp = depth * mlp_flops(len, d, decoder.mlp_ratio);
    r.head = 2 * n * d * encoder.patch_dim();
  } else {
    const std::uint64_t k = decoder.resolved_fused_maps(encoder.depth);
    r.queries = predicted;
    r.fused_maps = k;
    std::uint64_t per_block = attention_flops(predicted, enc_tokens, d, ed);
    if (decoder.variant == DecoderVariant::CrossPlusSelf) per_block += attention_flops(predicted, predicted, d, d);
    r.decoder_attention = depth * per_block;
    r.decoder_mlp = depth * mlp_flops(predicted, d, decoder.mlp_ratio);
    r.head = 2 * predicted * d * encoder.patch_dim();
    r.fusion = k > 1 ? k * depth * enc_tokens * ed : 0;
  }
  return r;
}

std::string flops_convention() {
  return "FLOPs per image; multiply-add = 2 FLOPs; counted: Q/K/V/output projections, attention scores and "
         "weighted sums, MLPs, decoder embedding, reconstruction head, inter-block fusion adds; ignored: softmax, "
         "LayerNorm, GELU, residual adds";
}

}  // namespace cmae
