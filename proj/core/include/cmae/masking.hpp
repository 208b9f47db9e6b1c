// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random visible / masked / predicted partitions of an image's patch tokens.
// The class token is never part of a plan.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cmae/ops.hpp"

namespace cmae {

struct MaskPlan {
  std::size_t num_tokens = 0;
  double mask_ratio = 0.0;
  double pred_ratio = 0.0;
  std::uint64_t seed = 0;
  // All three lists are sorted ascending; predicted is a subset of masked.
  std::vector<std::size_t> visible;
  std::vector<std::size_t> masked;
  std::vector<std::size_t> predicted;

  /// m_i = 1 iff token i is masked.
  std::vector<std::uint8_t> mask_vector() const;

  bool operator==(const MaskPlan&) const = default;
};

/// floor(ratio * n), tolerant of representation error in `ratio`.
std::size_t ratio_count(double ratio, std::size_t n);

/// Visible set is the head of a seeded permutation of 0..n-1; the predicted
/// set is the head of a seeded permutation of the masked set.
MaskPlan make_mask_plan(std::size_t n, double mask_ratio, double pred_ratio, std::uint64_t seed);

/// Keeps the visible and masked sets of `plan` and draws a fresh predicted
/// subset of floor(pred_ratio * N) masked tokens from `seed`. The `seed`
/// field still names the mask.
MaskPlan resample_prediction(const MaskPlan& plan, double pred_ratio, std::uint64_t seed);

/// Outer products m m^T and m (1 - m)^T, row-major n x n.
struct GroupMatrices {
  std::size_t n = 0;
  std::vector<std::uint8_t> mask_to_mask;
  std::vector<std::uint8_t> mask_to_visible;

  std::size_t count_mask_to_mask() const;
  std::size_t count_mask_to_visible() const;
};

GroupMatrices group_matrices(const MaskPlan& plan);

enum class PlanPart { Visible, Masked, Predicted };

/// Row indices of one part of each plan. All plans must agree on its size.
TokenIndex plan_index(std::span<const MaskPlan> plans, PlanPart part);

}  // namespace cmae
