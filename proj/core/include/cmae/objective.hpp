// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction targets, loss and learning-rate schedule.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmae/masking.hpp"
#include "cmae/tensor.hpp"

namespace cmae {

/// Per-row statistics of standardized patches. `std` already includes eps.
struct PatchStats {
  std::vector<double> mean;
  std::vector<double> std;
};

template <typename T>
struct NormalizedPatches {
  Tensor<T> values;
  PatchStats stats;
};

/// Standardizes every row over the last axis: (x - mean) / sqrt(var + eps).
/// The result carries no gradient.
template <typename T>
NormalizedPatches<T> patch_normalize(const Tensor<T>& patches, double eps = 1e-6);

/// Inverse of patch_normalize on plain values (rows * cols entries).
template <typename T>
std::vector<T> patch_denormalize(std::span<const T> normalized, const PatchStats& stats);

/// Mean squared error over the predicted rows of each plan.
///
/// `targets` is [B, N, patch_dim]. `pred` is either [B, N, patch_dim] (a
/// full-sequence decoder; the predicted rows are selected from it) or
/// [B, |predicted|, patch_dim] aligned with each plan's predicted order.
template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& targets, std::span<const MaskPlan> plans);

struct OptimConfig {
  double base_lr = 1.5e-4;
  std::size_t batch_size = 256;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  double eps = 1e-8;
  double warmup_epochs = 1;
  double total_epochs = 10;
  /// Micro-batches accumulated per optimizer step.
  std::size_t accum_steps = 1;

  void validate() const;
};

/// gamma * base_lr * batch / (256 * p).
///
/// Hyperparameters are decimal quantities, so the rule is evaluated on the
/// shortest decimal form of each input and rounded to double once. Plain
/// binary evaluation lands one ulp away from the decimal answer for common
/// settings (1.5e-4 * 4096 * 0.25 / (256 * 0.75) gives 7.999999999999999e-4).
double scaled_lr(double base_lr, std::size_t batch, double mask_ratio, double pred_ratio);

/// Linear warmup from 0 to `peak`, then half-cosine decay to 0 at
/// `total_epochs`. `epoch` may be fractional.
double cosine_warmup_lr(double epoch, double peak, double warmup_epochs, double total_epochs);

}  // namespace cmae
