// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Measurement tools: attention-group statistics, per-block reconstruction
// decomposition and inter-block weight maps.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cmae/model.hpp"
#include "cmae/objective.hpp"

namespace cmae {

/// Mean attention weight a masked query puts on one key of each group.
/// The class token belongs to the visible group.
struct GroupMeans {
  double mask_to_mask = 0.0;
  double mask_to_visible = 0.0;
};

struct AttentionStats {
  /// Raw mean weight per (query, key) pair.
  GroupMeans per_pair;
  /// per_pair scaled by the sequence length, so uniform attention reads 1.
  GroupMeans per_pair_times_seqlen;
  std::size_t images_seen = 0;
  std::size_t seq_len = 0;
};

/// Group means of one [L, L] attention map over a sequence laid out as
/// class token followed by the plan's N patches in position order.
GroupMeans attention_group_means(std::span<const double> map, const MaskPlan& plan);

/// Records every decoder attention map of a self-attention model on
/// `patches` ([B, N, patch_dim]) under fresh masks at ratio `mask_ratio`
/// (one plan per image, seeded from `seed` and the image index). Averages
/// over maps, then heads, then images.
template <typename T>
AttentionStats attention_stats(const MaskedAutoencoder<T>& model, const Tensor<T>& patches, double mask_ratio,
                               std::uint64_t seed, std::size_t batch_size = 16);

/// Reconstruction expressed as a base term plus one term per decoder block.
///
/// The head is LN followed by a linear map. Freezing the LN mean and std at
/// their values on the final features makes it affine (h~); applying h~ to
/// the block-1 input gives `base` and to each block's residual increment
/// gives that block's term, so the terms sum to h~(f_D) = h(f_D).
struct ReconstructionStack {
  /// Patch positions of the rows, in row order.
  std::vector<std::size_t> rows;
  std::size_t patch_dim = 0;
  /// [rows x patch_dim] each, in the model's target space.
  std::vector<double> base;
  std::vector<std::vector<double>> contributions;
  std::vector<double> total;
  /// max |base + sum(contributions) - total|.
  double identity_error = 0.0;
  /// max |h(f_i) - h~(f_i)| over every stage: how far the real head is from
  /// its frozen-statistics surrogate.
  double surrogate_gap = 0.0;

  /// Maps every term back to pixel space: base and total get the patch
  /// mean, all terms are scaled by the patch std.
  ReconstructionStack denormalized(const PatchStats& stats) const;
};

/// One stack per image of the batch.
template <typename T>
std::vector<ReconstructionStack> per_block_decomposition(const MaskedAutoencoder<T>& model, const Tensor<T>& patches,
                                                         std::span<const MaskPlan> plans);

/// Energy of the 4-neighbour Laplacian (edge-replicated, scaled by 1/8) of
/// an [H, W, C] image over the image's energy. Lies in [0, 1]; 0 for an
/// all-zero image.
double high_pass_fraction(std::span<const double> image, std::size_t height, std::size_t width,
                          std::size_t channels);

/// |W| as a D x k matrix, optionally with each row scaled to sum to 1.
std::vector<double> interblock_weight_map(const Tensor<float>& weight, bool row_normalize);

/// Mean source index sum_j j*|W[d][j]| / sum_j |W[d][j]| for each decoder
/// block d.
std::vector<double> weight_centroids(std::span<const double> map, std::size_t rows, std::size_t cols);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace cmae
