// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// ViT encoder over visible patches only.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmae/masking.hpp"
#include "cmae/nn.hpp"
#include "cmae/patch.hpp"

namespace cmae {

struct EncoderConfig {
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  /// Post-encoder LayerNorm on the last map (the self-attention decoder
  /// path). The cross-attention path normalizes after fusion instead.
  bool final_norm = false;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  ImageGeometry geometry() const { return {image_size, image_size, channels}; }
  void validate() const;
};

/// maps[0] is the patch-embedding output (input of block 1); maps[j] is the
/// output of block j. Every map is [B, 1 + |visible|, dim] with the class
/// token in row 0.
template <typename T>
struct EncoderFeatures {
  std::vector<Tensor<T>> maps;
  /// LN(maps.back()) when the encoder has a final norm, otherwise undefined.
  Tensor<T> normed_last;

  const Tensor<T>& last() const { return normed_last.defined() ? normed_last : maps.back(); }
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, CounterRng& rng);

  /// patches: [B, N, patch_dim]. Only rows listed in each plan's visible set
  /// are read.
  EncoderFeatures<T> encode(const Tensor<T>& patches, std::span<const MaskPlan> plans) const;
  /// Every patch visible (finetuning and probing).
  EncoderFeatures<T> encode_all(const Tensor<T>& patches) const;

  const EncoderConfig& config() const { return config_; }
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Linear<T> patch_embed;
  Tensor<T> cls_token;  // [dim]
  Tensor<T> pos_table;  // [N, dim], fixed
  std::vector<SelfAttentionBlock<T>> blocks;
  LayerNorm<T> norm;

 private:
  EncoderFeatures<T> run(const Tensor<T>& patches, const TokenIndex& visible) const;

  EncoderConfig config_;
};

/// Stacks per-image HWC float images into [B, N, patch_dim].
template <typename T>
Tensor<T> patchify_batch(std::span<const T> images, std::size_t batch, const EncoderConfig& config);

}  // namespace cmae
