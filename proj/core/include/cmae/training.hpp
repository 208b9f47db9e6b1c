// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pretraining and finetuning loops.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "cmae/dataset.hpp"
#include "cmae/model.hpp"
#include "cmae/objective.hpp"

namespace cmae {

struct PretrainConfig {
  OptimConfig optim;
  double mask_ratio = 0.75;
  double pred_ratio = 0.75;
  std::uint64_t seed = 0;
  bool flip = true;
  std::size_t crop_pad = 0;
  /// Stop after this many optimizer steps; 0 runs the whole schedule.
  std::size_t max_steps = 0;
  /// Keep the mask plans of the first this-many optimizer steps.
  std::size_t record_plan_steps = 0;
};

struct StepRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // global optimizer step, 1-based
  double lr = 0.0;
  double loss = 0.0;
};

struct PretrainResult {
  double peak_lr = 0.0;
  std::vector<StepRecord> steps;
  /// Mean step loss of every completed epoch.
  std::vector<double> epoch_loss;
  /// Mask plans of the recorded steps, in training order.
  std::vector<std::vector<MaskPlan>> plans;
};

/// Mask plan for image `index` in epoch `epoch`; independent of batching.
MaskPlan training_mask_plan(std::size_t num_patches, double mask_ratio, double pred_ratio, std::uint64_t seed,
                            std::size_t epoch, std::size_t index);

/// Trains with AdamW at scaled_lr(base_lr, batch_size, p, gamma) under a
/// cosine-with-warmup schedule. `optim.batch_size` is the effective batch;
/// each optimizer step accumulates `optim.accum_steps` micro-batches.
/// Throws NumericError on a non-finite loss or gradient.
PretrainResult pretrain(MaskedAutoencoder<float>& model, const Dataset& data, const PretrainConfig& config,
                        const std::function<void(const StepRecord&)>& on_step = {});

enum class FinetuneMode { LinearProbe, Full };

struct FinetuneConfig {
  FinetuneMode mode = FinetuneMode::LinearProbe;
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double warmup_epochs = 1;
  bool flip = true;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// Global average of the last encoder map over patch tokens (class token
/// excluded), with every patch visible: [B, dim].
template <typename T>
Tensor<T> pooled_features(const Encoder<T>& encoder, const Tensor<T>& patches);

/// Classification on top of global-average-pooled encoder features. The
/// linear probe freezes the encoder and trains a linear layer on
/// standardized features; full mode trains a copy of the encoder together
/// with a LayerNorm + linear head. `encoder` itself is never modified.
FinetuneResult finetune(const Encoder<float>& encoder, const Dataset& train, const Dataset& test,
                        const FinetuneConfig& config);

}  // namespace cmae
