// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/objective.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "cmae/errors.hpp"
#include "cmae/ops.hpp"

namespace cmae {

template <typename T>
NormalizedPatches<T> patch_normalize(const Tensor<T>& patches, double eps) {
  if (patches.rank() == 0) throw ConfigError("patch_normalize: expected at least one axis");
  const std::size_t cols = patches.shape().back();
  const std::size_t rows = cols == 0 ? 0 : patches.numel() / cols;
  const auto x = patches.data();
  NormalizedPatches<T> out;
  out.stats.mean.resize(rows);
  out.stats.std.resize(rows);
  std::vector<T> values(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(cols);
    const double std = std::sqrt(var + eps);
    out.stats.mean[r] = mean;
    out.stats.std[r] = std;
    for (std::size_t c = 0; c < cols; ++c) values[r * cols + c] = static_cast<T>((row[c] - mean) / std);
  }
  out.values = Tensor<T>(patches.shape(), std::move(values));
  return out;
}

template <typename T>
std::vector<T> patch_denormalize(std::span<const T> normalized, const PatchStats& stats) {
  const std::size_t rows = stats.mean.size();
  if (rows == 0 || normalized.size() % rows != 0 || stats.std.size() != rows) {
    throw ConfigError("patch_denormalize: " + std::to_string(normalized.size()) + " values do not split into " +
                      std::to_string(rows) + " rows");
  }
  const std::size_t cols = normalized.size() / rows;
  std::vector<T> out(normalized.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = static_cast<T>(normalized[r * cols + c] * stats.std[r] + stats.mean[r]);
    }
  }
  return out;
}

template <typename T>
Tensor<T> masked_mse_loss(const Tensor<T>& pred, const Tensor<T>& targets, std::span<const MaskPlan> plans) {
  if (targets.rank() != 3 || pred.rank() != 3 || targets.dim(0) != plans.size() || pred.dim(0) != plans.size() ||
      pred.dim(2) != targets.dim(2)) {
    throw ConfigError("masked_mse_loss: pred " + shape_str(pred.shape()) + " and targets " +
                      shape_str(targets.shape()) + " do not match " + std::to_string(plans.size()) + " plans");
  }
  const TokenIndex predicted = plan_index(plans, PlanPart::Predicted);
  Tensor<T> rows = pred;
  if (pred.dim(1) == targets.dim(1) && pred.dim(1) != predicted.rows) {
    rows = gather_rows(pred, predicted);
  } else if (pred.dim(1) != predicted.rows) {
    throw ConfigError("masked_mse_loss: prediction has " + std::to_string(pred.dim(1)) + " rows, expected " +
                      std::to_string(predicted.rows) + " predicted or " + std::to_string(targets.dim(1)) + " total");
  }
  const Tensor<T> diff = sub(rows, gather_rows(targets.detach(), predicted));
  return mean(mul(diff, diff));
}

void OptimConfig::validate() const {
  if (!(base_lr > 0) || batch_size == 0 || !(eps > 0) || weight_decay < 0 || accum_steps == 0) {
    throw ConfigError("optimizer: base lr, batch size, eps and accumulation steps must be positive");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
  if (!(total_epochs > 0) || warmup_epochs < 0 || warmup_epochs > total_epochs) {
    throw ConfigError("optimizer: need 0 <= warmup epochs <= total epochs and total > 0");
  }
}

namespace {

using u128 = unsigned __int128;

struct Decimal {
  std::uint64_t digits = 0;
  int exponent = 0;  // value = digits * 10^exponent
};

// Shortest round-trip decimal of a positive finite double.
bool to_decimal(double x, Decimal& out) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::scientific);
  if (res.ec != std::errc{}) return false;
  const std::string s(buf, res.ptr);
  const auto e = s.find('e');
  std::uint64_t digits = 0;
  int frac = 0;
  bool after_point = false;
  for (std::size_t i = 0; i < e; ++i) {
    if (s[i] == '.') {
      after_point = true;
      continue;
    }
    digits = digits * 10 + static_cast<std::uint64_t>(s[i] - '0');
    if (after_point) ++frac;
  }
  int exp10 = 0;
  std::from_chars(s.data() + e + 1 + (s[e + 1] == '+' ? 1 : 0), s.data() + s.size(), exp10);
  out = {digits, exp10 - frac};
  return true;
}

bool checked_mul(u128 a, u128 b, u128& out) { return !__builtin_mul_overflow(a, b, &out); }

// Correctly rounded num / den * 10^exp10.
double decimal_ratio(u128 num, u128 den, int exp10) {
  u128 q = num / den;
  u128 r = num % den;
  std::string digits;
  while (q > 0) {
    digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(q % 10)));
    q /= 10;
  }
  int scale = 0;  // fractional digits emitted
  while (r != 0 && (digits.empty() || digits.size() < 40)) {
    r *= 10;
    const auto d = static_cast<int>(r / den);
    r %= den;
    if (!(digits.empty() && d == 0)) digits.push_back(static_cast<char>('0' + d));
    ++scale;
  }
  if (digits.empty()) return 0.0;
  // A sticky digit keeps a truncated expansion from reading as an exact tie.
  if (r != 0) {
    digits.push_back('1');
    ++scale;
  }
  const std::string text = digits + "e" + std::to_string(exp10 - scale);
  double value = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), value);
  return value;
}

}  // namespace

double scaled_lr(double base_lr, std::size_t batch, double mask_ratio, double pred_ratio) {
  if (!(mask_ratio > 0 && mask_ratio < 1) || !(pred_ratio > 0 && pred_ratio <= mask_ratio)) {
    throw ConfigError("scaled_lr: need 0 < pred ratio <= mask ratio < 1");
  }
  if (!(base_lr > 0) || !std::isfinite(base_lr) || batch == 0) {
    throw ConfigError("scaled_lr: base lr and batch size must be positive");
  }
  Decimal b, p, g;
  u128 num = 0;
  u128 den = 0;
  if (to_decimal(base_lr, b) && to_decimal(mask_ratio, p) && to_decimal(pred_ratio, g) &&
      checked_mul(u128{g.digits}, u128{b.digits}, num) && checked_mul(num, u128{batch}, num) &&
      checked_mul(u128{256}, u128{p.digits}, den)) {
    return decimal_ratio(num, den, g.exponent + b.exponent - p.exponent);
  }
  return pred_ratio * base_lr * static_cast<double>(batch) / (256.0 * mask_ratio);
}

double cosine_warmup_lr(double epoch, double peak, double warmup_epochs, double total_epochs) {
  if (epoch <= 0) return 0.0;
  if (epoch < warmup_epochs) return peak * epoch / warmup_epochs;
  if (epoch >= total_epochs) return 0.0;
  const double progress = (epoch - warmup_epochs) / (total_epochs - warmup_epochs);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template NormalizedPatches<float> patch_normalize(const Tensor<float>&, double);
template NormalizedPatches<double> patch_normalize(const Tensor<double>&, double);
template std::vector<float> patch_denormalize(std::span<const float>, const PatchStats&);
template std::vector<double> patch_denormalize(std::span<const double>, const PatchStats&);
template Tensor<float> masked_mse_loss(const Tensor<float>&, const Tensor<float>&, std::span<const MaskPlan>);
template Tensor<double> masked_mse_loss(const Tensor<double>&, const Tensor<double>&, std::span<const MaskPlan>);

}  // namespace cmae
