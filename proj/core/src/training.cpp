// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cmae/errors.hpp"
#include "cmae/optim.hpp"

namespace cmae {

namespace {

void check_geometry(const Dataset& data, const EncoderConfig& enc) {
  if (data.height != enc.image_size || data.width != enc.image_size || data.channels != enc.channels) {
    throw ConfigError("dataset images are " + std::to_string(data.height) + "x" + std::to_string(data.width) + "x" +
                      std::to_string(data.channels) + ", model expects " + std::to_string(enc.image_size) + "x" +
                      std::to_string(enc.image_size) + "x" + std::to_string(enc.channels));
  }
}

void check_finite(double loss, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite loss " + std::to_string(loss) + " at step " + std::to_string(step));
  }
}

}  // namespace

MaskPlan training_mask_plan(std::size_t num_patches, double mask_ratio, double pred_ratio, std::uint64_t seed,
                            std::size_t epoch, std::size_t index) {
  return make_mask_plan(num_patches, mask_ratio, pred_ratio, derive_seed({seed, 0x6d61736bull, epoch, index}));
}

PretrainResult pretrain(MaskedAutoencoder<float>& model, const Dataset& data, const PretrainConfig& config,
                        const std::function<void(const StepRecord&)>& on_step) {
  const OptimConfig& oc = config.optim;
  oc.validate();
  const EncoderConfig& enc = model.config().encoder;
  check_geometry(data, enc);
  if (oc.batch_size % oc.accum_steps != 0) {
    throw ConfigError("batch size " + std::to_string(oc.batch_size) + " is not divisible by " +
                      std::to_string(oc.accum_steps) + " accumulation steps");
  }
  const std::size_t micro = oc.batch_size / oc.accum_steps;
  LoaderConfig lc;
  lc.batch_size = micro;
  lc.seed = derive_seed({config.seed, 0x64617461ull});
  lc.flip = config.flip;
  lc.crop_pad = config.crop_pad;
  const DataLoader loader(data, lc);
  const std::size_t steps_per_epoch = loader.batches_per_epoch() / oc.accum_steps;
  if (steps_per_epoch == 0) {
    throw ConfigError("dataset of " + std::to_string(data.size()) + " images is smaller than one batch of " +
                      std::to_string(oc.batch_size));
  }

  PretrainResult result;
  result.peak_lr = scaled_lr(oc.base_lr, oc.batch_size, config.mask_ratio, config.pred_ratio);
  AdamConfig ac;
  ac.beta1 = oc.beta1;
  ac.beta2 = oc.beta2;
  ac.eps = oc.eps;
  ac.weight_decay = oc.weight_decay;
  Adam<float> opt(model.parameters(), ac);

  const auto epochs = static_cast<std::size_t>(std::ceil(oc.total_epochs));
  const std::size_t n = enc.num_patches();
  std::size_t global = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = loader.epoch_order(e);
    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const double progress = static_cast<double>(e) + static_cast<double>(s) / static_cast<double>(steps_per_epoch);
      if (progress >= oc.total_epochs) break;
      const double lr = cosine_warmup_lr(progress, result.peak_lr, oc.warmup_epochs, oc.total_epochs);
      opt.zero_grad();
      double step_loss = 0.0;
      std::vector<MaskPlan> step_plans;
      for (std::size_t a = 0; a < oc.accum_steps; ++a) {
        const Batch batch = loader.batch(order, e, s * oc.accum_steps + a);
        const Tensor<float> patches = patchify_batch<float>(batch.images, batch.count, enc);
        std::vector<MaskPlan> plans;
        plans.reserve(batch.count);
        for (std::size_t idx : batch.indices) {
          plans.push_back(training_mask_plan(n, config.mask_ratio, config.pred_ratio, config.seed, e, idx));
        }
        Tensor<float> loss = model.loss(patches, plans);
        const double value = loss.item();
        check_finite(value, global + 1);
        if (oc.accum_steps > 1) loss = scale(loss, 1.0f / static_cast<float>(oc.accum_steps));
        loss.backward();
        step_loss += value;
        if (global < config.record_plan_steps) step_plans.insert(step_plans.end(), plans.begin(), plans.end());
      }
      opt.step(lr);
      ++global;
      step_loss /= static_cast<double>(oc.accum_steps);
      if (!step_plans.empty()) result.plans.push_back(std::move(step_plans));
      const StepRecord rec{e + 1, global, lr, step_loss};
      result.steps.push_back(rec);
      if (on_step) on_step(rec);
      epoch_sum += step_loss;
      ++epoch_steps;
      if (config.max_steps != 0 && global >= config.max_steps) break;
    }
    if (epoch_steps > 0) result.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
    if (config.max_steps != 0 && global >= config.max_steps) break;
  }
  return result;
}

template <typename T>
Tensor<T> pooled_features(const Encoder<T>& encoder, const Tensor<T>& patches) {
  const EncoderFeatures<T> features = encoder.encode_all(patches);
  const Tensor<T>& last = features.maps.back();
  TokenIndex rows;
  rows.batch = last.dim(0);
  rows.rows = last.dim(1) - 1;
  rows.flat.resize(rows.batch * rows.rows);
  for (std::size_t b = 0; b < rows.batch; ++b) {
    std::iota(rows.flat.begin() + static_cast<std::ptrdiff_t>(b * rows.rows),
              rows.flat.begin() + static_cast<std::ptrdiff_t>((b + 1) * rows.rows), std::size_t{1});
  }
  return mean_axis(gather_rows(last, rows), 1);
}

namespace {

int argmax_row(std::span<const float> logits, std::size_t row, std::size_t classes) {
  const float* p = logits.data() + row * classes;
  return static_cast<int>(std::max_element(p, p + classes) - p);
}

std::vector<float> extract_features(const Encoder<float>& encoder, const Dataset& data) {
  NoGradGuard no_grad;
  const std::size_t dim = encoder.config().dim;
  std::vector<float> out(data.size() * dim);
  constexpr std::size_t kChunk = 256;
  for (std::size_t first = 0; first < data.size(); first += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - first);
    const auto images = to_float_images(data, first, count);
    const auto feats = pooled_features(encoder, patchify_batch<float>(images, count, encoder.config()));
    std::copy(feats.data().begin(), feats.data().end(), out.begin() + static_cast<std::ptrdiff_t>(first * dim));
  }
  return out;
}

std::size_t num_classes(const Dataset& data) {
  if (!data.labeled || data.labels.empty()) throw DataError("finetuning needs a labeled dataset");
  return static_cast<std::size_t>(*std::max_element(data.labels.begin(), data.labels.end())) + 1;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

AdamConfig finetune_adam(const FinetuneConfig& config) {
  AdamConfig ac;
  ac.beta1 = 0.9;
  ac.beta2 = 0.999;
  ac.weight_decay = config.weight_decay;
  return ac;
}

FinetuneResult linear_probe(const Encoder<float>& encoder, const Dataset& train, const Dataset& test,
                            const FinetuneConfig& config, std::size_t classes) {
  const std::size_t dim = encoder.config().dim;
  auto train_x = extract_features(encoder, train);
  auto test_x = extract_features(encoder, test);
  std::vector<double> mu(dim, 0.0);
  std::vector<double> sd(dim, 0.0);
  const std::size_t n = train.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dim; ++c) mu[c] += train_x[i * dim + c];
  }
  for (auto& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < dim; ++c) sd[c] += (train_x[i * dim + c] - mu[c]) * (train_x[i * dim + c] - mu[c]);
  }
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n)) + 1e-6;
  auto standardize = [&](std::vector<float>& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<float>((x[i] - mu[i % dim]) / sd[i % dim]);
    }
  };
  standardize(train_x);
  standardize(test_x);

  CounterRng rng(derive_seed({config.seed, 0x70726f62ull}));
  const Linear<float> head(dim, classes, rng);
  ParamList<float> params;
  head.collect("head", params);
  Adam<float> opt(params, finetune_adam(config));

  FinetuneResult result;
  const std::size_t bs = std::min(config.batch_size, n);
  const std::size_t steps = n / bs;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto order = shuffled(n, derive_seed({config.seed, 0x65706f63ull, e}));
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const double progress = static_cast<double>(e) + static_cast<double>(s) / static_cast<double>(steps);
      const double lr =
          cosine_warmup_lr(progress, config.lr, config.warmup_epochs, static_cast<double>(config.epochs));
      std::vector<float> xb(bs * dim);
      std::vector<int> yb(bs);
      for (std::size_t b = 0; b < bs; ++b) {
        const std::size_t idx = order[s * bs + b];
        std::copy_n(train_x.begin() + static_cast<std::ptrdiff_t>(idx * dim), dim,
                    xb.begin() + static_cast<std::ptrdiff_t>(b * dim));
        yb[b] = train.labels[idx];
      }
      opt.zero_grad();
      const Tensor<float> loss = cross_entropy(head(Tensor<float>({bs, dim}, std::move(xb))), std::span<const int>(yb));
      sum += loss.item();
      check_finite(loss.item(), s + 1);
      loss.backward();
      opt.step(lr);
    }
    result.epoch_loss.push_back(sum / static_cast<double>(steps));
  }

  NoGradGuard no_grad;
  auto accuracy = [&](const std::vector<float>& x, const Dataset& data) {
    const std::size_t m = data.size();
    if (m == 0) return 0.0;
    const Tensor<float> logits = head(Tensor<float>({m, dim}, x));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < m; ++i) correct += argmax_row(logits.data(), i, classes) == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(m);
  };
  result.train_accuracy = accuracy(train_x, train);
  result.test_accuracy = accuracy(test_x, test);
  return result;
}

FinetuneResult full_finetune(const Encoder<float>& source, const Dataset& train, const Dataset& test,
                             const FinetuneConfig& config, std::size_t classes) {
  CounterRng rng(derive_seed({config.seed, 0x66756c6cull}));
  Encoder<float> encoder(source.config(), rng);
  ParamList<float> src_params;
  source.collect("encoder", src_params);
  ParamList<float> params;
  encoder.collect("encoder", params);
  copy_params_by_name(params, src_params);
  const std::size_t dim = source.config().dim;
  const LayerNorm<float> norm(dim);
  const Linear<float> head(dim, classes, rng);
  norm.collect("norm", params);
  head.collect("head", params);
  Adam<float> opt(params, finetune_adam(config));

  LoaderConfig lc;
  lc.batch_size = std::min(config.batch_size, train.size());
  lc.seed = derive_seed({config.seed, 0x64617461ull});
  lc.flip = config.flip;
  const DataLoader loader(train, lc);
  const std::size_t steps = loader.batches_per_epoch();

  FinetuneResult result;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    const auto order = loader.epoch_order(e);
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const double progress = static_cast<double>(e) + static_cast<double>(s) / static_cast<double>(steps);
      const double lr =
          cosine_warmup_lr(progress, config.lr, config.warmup_epochs, static_cast<double>(config.epochs));
      const Batch batch = loader.batch(order, e, s);
      const Tensor<float> patches = patchify_batch<float>(batch.images, batch.count, encoder.config());
      opt.zero_grad();
      const Tensor<float> loss =
          cross_entropy(head(norm(pooled_features(encoder, patches))), std::span<const int>(batch.labels));
      check_finite(loss.item(), s + 1);
      sum += loss.item();
      loss.backward();
      opt.step(lr);
    }
    result.epoch_loss.push_back(sum / static_cast<double>(steps));
  }

  NoGradGuard no_grad;
  auto accuracy = [&](const Dataset& data) {
    if (data.size() == 0) return 0.0;
    const auto x = extract_features(encoder, data);
    const Tensor<float> logits = head(norm(Tensor<float>({data.size(), dim}, x)));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += argmax_row(logits.data(), i, classes) == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(data.size());
  };
  result.train_accuracy = accuracy(train);
  result.test_accuracy = accuracy(test);
  return result;
}

}  // namespace

FinetuneResult finetune(const Encoder<float>& encoder, const Dataset& train, const Dataset& test,
                        const FinetuneConfig& config) {
  check_geometry(train, encoder.config());
  if (test.size() > 0) check_geometry(test, encoder.config());
  if (config.epochs == 0 || config.batch_size == 0 || !(config.lr > 0)) {
    throw ConfigError("finetune: epochs, batch size and lr must be positive");
  }
  if (train.size() == 0) throw DataError("finetune: empty training set");
  const std::size_t classes = num_classes(train);
  if (test.size() > 0 && !test.labeled) throw DataError("finetuning needs a labeled evaluation set");
  if (config.mode == FinetuneMode::LinearProbe) return linear_probe(encoder, train, test, config, classes);
  return full_finetune(encoder, train, test, config, classes);
}

template Tensor<float> pooled_features(const Encoder<float>&, const Tensor<float>&);
template Tensor<double> pooled_features(const Encoder<double>&, const Tensor<double>&);

}  // namespace cmae
