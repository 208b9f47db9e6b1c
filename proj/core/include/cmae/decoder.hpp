// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoders: the self-attention baseline over the full token sequence, the
// cross-attention decoder that only reconstructs the predicted subset, and
// the cross+self ablation.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmae/encoder.hpp"

namespace cmae {

enum class DecoderVariant { SelfAttn, CrossAttn, CrossPlusSelf };

std::string_view variant_name(DecoderVariant variant);
/// Accepts "self", "cross", "cross_self" and the long forms "self_attn",
/// "cross_attn", "cross_plus_self".
DecoderVariant parse_variant(std::string_view name);

struct DecoderConfig {
  DecoderVariant variant = DecoderVariant::CrossAttn;
  std::size_t dim = 32;
  std::size_t depth = 4;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  /// Encoder maps fused into each block's keys/values. 0 means all n+1.
  std::size_t fused_maps = 0;

  std::size_t resolved_fused_maps(std::size_t encoder_depth) const {
    return fused_maps == 0 ? encoder_depth + 1 : fused_maps;
  }
  void validate(const EncoderConfig& encoder) const;
};

/// Indices into the n+1 encoder maps. k=1 picks the last map; otherwise the
/// first and last are always included and the rest are spread evenly:
/// round(j*n/(k-1)) for j in [0, k).
std::vector<std::size_t> select_feature_maps(std::size_t encoder_depth, std::size_t k);

/// Intermediate decoder state, for analysis.
template <typename T>
struct DecodeTrace {
  bool record_attention = false;
  /// stages[0] is the block-1 input; stages[i] is block i's output.
  std::vector<Tensor<T>> stages;
  /// Rows of each stage that are not reconstructed (the class token row of
  /// the self-attention decoder).
  std::size_t skip_leading_rows = 0;
  /// Per block, self-attention weights laid out [B, heads, L, L].
  std::vector<std::vector<T>> attention;
};

/// LayerNorm followed by a linear map to patch pixels.
template <typename T>
struct ReconstructionHead {
  LayerNorm<T> norm;
  Linear<T> proj;

  ReconstructionHead() = default;
  ReconstructionHead(std::size_t dim, std::size_t patch_dim, CounterRng& rng) : norm(dim), proj(dim, patch_dim, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return proj(norm(x)); }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    norm.collect(prefix + ".norm", out);
    proj.collect(prefix + ".proj", out);
  }
};

/// Weighted sums of encoder maps, one per decoder block, with a single
/// LayerNorm shared by all blocks afterwards.
template <typename T>
struct InterBlockFusion {
  std::vector<std::size_t> selection;
  std::size_t depth = 0;
  /// [D, k]; undefined when k = 1.
  Tensor<T> weight;
  LayerNorm<T> norm;

  InterBlockFusion() = default;
  InterBlockFusion(std::size_t decoder_depth, std::size_t encoder_depth, std::size_t k, std::size_t enc_dim,
                   CounterRng& rng);

  /// Fused maps before the shared LayerNorm.
  std::vector<Tensor<T>> pre_norm(const EncoderFeatures<T>& features) const;
  std::vector<Tensor<T>> operator()(const EncoderFeatures<T>& features) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
class SelfDecoder {
 public:
  SelfDecoder() = default;
  SelfDecoder(const DecoderConfig& config, const EncoderConfig& encoder, CounterRng& rng);

  /// Returns [B, N, patch_dim] covering every patch in position order.
  Tensor<T> operator()(const EncoderFeatures<T>& features, std::span<const MaskPlan> plans,
                       DecodeTrace<T>* trace = nullptr) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Linear<T> embed;
  Tensor<T> mask_token;  // [dim]
  Tensor<T> pos_table;   // [N, dim], fixed
  std::vector<SelfAttentionBlock<T>> blocks;
  ReconstructionHead<T> head;
};

template <typename T>
class CrossDecoder {
 public:
  CrossDecoder() = default;
  CrossDecoder(const DecoderConfig& config, const EncoderConfig& encoder, CounterRng& rng);

  /// Returns [B, |predicted|, patch_dim], rows in each plan's predicted order.
  Tensor<T> operator()(const EncoderFeatures<T>& features, std::span<const MaskPlan> plans,
                       DecodeTrace<T>* trace = nullptr) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Tensor<T> mask_token;  // [dim]
  Tensor<T> pos_table;   // [N, dim], fixed
  InterBlockFusion<T> fusion;
  std::vector<CrossAttentionBlock<T>> blocks;
  ReconstructionHead<T> head;
};

}  // namespace cmae
