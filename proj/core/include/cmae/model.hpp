// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder plus one decoder variant, with the reconstruction loss.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cmae/checkpoint.hpp"
#include "cmae/decoder.hpp"
#include "cmae/encoder.hpp"

namespace cmae {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  /// Loss against per-patch standardized pixels rather than raw pixels.
  bool norm_pix_loss = true;

  void validate() const;
};

/// Encoder and decoder settings for a variant with the matching encoder
/// output convention: a final encoder LayerNorm for the self-attention
/// decoder, none for the cross-attention decoders (they normalize after
/// fusion).
ModelConfig make_model_config(DecoderVariant variant);

template <typename T>
class MaskedAutoencoder {
 public:
  MaskedAutoencoder() = default;
  MaskedAutoencoder(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  DecoderVariant variant() const { return config_.decoder.variant; }

  EncoderFeatures<T> encode(const Tensor<T>& patches, std::span<const MaskPlan> plans) const;
  /// Self-attention decoder: [B, N, patch_dim]. Cross decoders:
  /// [B, |predicted|, patch_dim].
  Tensor<T> decode(const EncoderFeatures<T>& features, std::span<const MaskPlan> plans,
                   DecodeTrace<T>* trace = nullptr) const;
  Tensor<T> predict(const Tensor<T>& patches, std::span<const MaskPlan> plans,
                    DecodeTrace<T>* trace = nullptr) const;
  /// Reconstruction targets for `patches` (standardized when norm_pix_loss).
  Tensor<T> targets(const Tensor<T>& patches) const;
  /// Mean squared error on each plan's predicted patches.
  Tensor<T> loss(const Tensor<T>& patches, std::span<const MaskPlan> plans) const;

  /// Trainable parameters named "encoder.*" and "decoder.*".
  ParamList<T> parameters() const;
  std::vector<NamedArray> state() const;
  /// Copies every parameter whose name starts with `prefix` from `records`.
  /// Each such parameter must be present with a matching shape.
  void load_state(std::span<const NamedArray> records, std::string_view prefix = "");

  Encoder<T> encoder;
  SelfDecoder<T> self_decoder;
  CrossDecoder<T> cross_decoder;

 private:
  ModelConfig config_;
};

/// Copies parameter values between parameter lists by name. Returns the
/// number of copied tensors; names missing on either side are skipped.
template <typename Dst, typename Src>
std::size_t copy_params_by_name(const ParamList<Dst>& dst, const ParamList<Src>& src);

}  // namespace cmae
