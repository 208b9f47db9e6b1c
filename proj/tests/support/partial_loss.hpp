// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo over prediction subsets with a frozen per-token error field.

#pragma once

#include <cmath>
#include <vector>

#include "cmae/masking.hpp"
#include "cmae/objective.hpp"
#include "cmae/rng.hpp"

namespace cmae::testing {

struct ErrorField {
  Tensor<double> targets;  // [1, N, cols]
  Tensor<double> pred;     // targets + error
  MaskPlan plan;           // fixed visible / masked split
};

inline ErrorField make_error_field(std::size_t n, std::size_t cols, double mask_ratio, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> t(n * cols), p(n * cols);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = rng.normal();
    // Heavy-ish tail so per-token losses differ widely.
    const double e = rng.normal() * (1.0 + 2.0 * rng.uniform());
    p[i] = t[i] + e;
  }
  ErrorField f{Tensor<double>({1, n, cols}, t), Tensor<double>({1, n, cols}, p),
               make_mask_plan(n, mask_ratio, mask_ratio, derive_seed({seed, 1}))};
  return f;
}

inline double loss_on(const ErrorField& f, const MaskPlan& plan) {
  const MaskPlan plans[] = {plan};
  return masked_mse_loss(f.pred, f.targets, plans).item();
}

struct SubsetStats {
  double full_loss = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  std::size_t subset_size = 0;
  /// Exact variance of the mean of `subset_size` per-token losses drawn
  /// without replacement from the masked set.
  double exact_variance = 0.0;
};

inline SubsetStats subset_stats(const ErrorField& f, double pred_ratio, std::size_t draws, std::uint64_t seed) {
  SubsetStats s;
  s.full_loss = loss_on(f, f.plan);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const MaskPlan plan = resample_prediction(f.plan, pred_ratio, derive_seed({seed, i}));
    s.subset_size = plan.predicted.size();
    const double l = loss_on(f, plan);
    sum += l;
    sum2 += l * l;
  }
  const double n = static_cast<double>(draws);
  s.mean = sum / n;
  s.variance = (sum2 - n * s.mean * s.mean) / (n - 1.0);

  // Oracle from the per-token losses themselves.
  const std::size_t cols = f.targets.dim(2);
  std::vector<double> token;
  for (std::size_t m : f.plan.masked) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = f.pred.data()[m * cols + c] - f.targets.data()[m * cols + c];
      acc += d * d;
    }
    token.push_back(acc / static_cast<double>(cols));
  }
  const double big_m = static_cast<double>(token.size());
  double mu = 0.0;
  for (double v : token) mu += v;
  mu /= big_m;
  double s2 = 0.0;
  for (double v : token) s2 += (v - mu) * (v - mu);
  s2 /= big_m - 1.0;
  const double m = static_cast<double>(s.subset_size);
  s.exact_variance = s2 / m * (big_m - m) / big_m;
  return s;
}

}  // namespace cmae::testing
