// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cmae/errors.hpp"
#include "cmae/rng.hpp"

namespace cmae {

std::vector<std::uint8_t> MaskPlan::mask_vector() const {
  std::vector<std::uint8_t> m(num_tokens, 0);
  for (std::size_t i : masked) m[i] = 1;
  return m;
}

std::size_t ratio_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

namespace {

void shuffle(std::vector<std::size_t>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::vector<std::size_t> draw_predicted(const std::vector<std::size_t>& masked, std::size_t count, CounterRng& rng) {
  std::vector<std::size_t> pick = masked;
  shuffle(pick, rng);
  pick.resize(count);
  std::sort(pick.begin(), pick.end());
  return pick;
}

void check_ratios(std::size_t n, double mask_ratio, double pred_ratio) {
  if (n == 0) throw ConfigError("mask plan: need at least one token");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw ConfigError("mask plan: mask ratio must lie in (0, 1), got " + std::to_string(mask_ratio));
  }
  if (!(pred_ratio > 0.0) || pred_ratio > mask_ratio) {
    throw ConfigError("mask plan: prediction ratio must lie in (0, mask ratio], got " + std::to_string(pred_ratio) +
                      " with mask ratio " + std::to_string(mask_ratio));
  }
}

std::size_t prediction_count(std::size_t n, double pred_ratio, std::size_t num_masked) {
  const std::size_t num_pred = std::min(ratio_count(pred_ratio, n), num_masked);
  if (num_pred == 0) {
    throw ConfigError("mask plan: prediction ratio " + std::to_string(pred_ratio) + " selects no token out of " +
                      std::to_string(n));
  }
  return num_pred;
}

}  // namespace

MaskPlan make_mask_plan(std::size_t n, double mask_ratio, double pred_ratio, std::uint64_t seed) {
  check_ratios(n, mask_ratio, pred_ratio);
  const std::size_t num_masked = ratio_count(mask_ratio, n);
  const std::size_t num_pred = prediction_count(n, pred_ratio, num_masked);

  MaskPlan plan;
  plan.num_tokens = n;
  plan.mask_ratio = mask_ratio;
  plan.pred_ratio = pred_ratio;
  plan.seed = seed;

  CounterRng rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);
  const std::size_t num_visible = n - num_masked;
  plan.visible.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(num_visible));
  plan.masked.assign(perm.begin() + static_cast<std::ptrdiff_t>(num_visible), perm.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  std::sort(plan.masked.begin(), plan.masked.end());

  plan.predicted = draw_predicted(plan.masked, num_pred, rng);
  return plan;
}

MaskPlan resample_prediction(const MaskPlan& plan, double pred_ratio, std::uint64_t seed) {
  check_ratios(plan.num_tokens, plan.mask_ratio, pred_ratio);
  MaskPlan out = plan;
  out.pred_ratio = pred_ratio;
  CounterRng rng(seed);
  out.predicted = draw_predicted(plan.masked, prediction_count(plan.num_tokens, pred_ratio, plan.masked.size()), rng);
  return out;
}

std::size_t GroupMatrices::count_mask_to_mask() const {
  return static_cast<std::size_t>(std::count(mask_to_mask.begin(), mask_to_mask.end(), 1));
}

std::size_t GroupMatrices::count_mask_to_visible() const {
  return static_cast<std::size_t>(std::count(mask_to_visible.begin(), mask_to_visible.end(), 1));
}

GroupMatrices group_matrices(const MaskPlan& plan) {
  const auto m = plan.mask_vector();
  const std::size_t n = plan.num_tokens;
  GroupMatrices g;
  g.n = n;
  g.mask_to_mask.assign(n * n, 0);
  g.mask_to_visible.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      g.mask_to_mask[i * n + j] = static_cast<std::uint8_t>(m[i] * m[j]);
      g.mask_to_visible[i * n + j] = static_cast<std::uint8_t>(m[i] * (1 - m[j]));
    }
  }
  return g;
}

TokenIndex plan_index(std::span<const MaskPlan> plans, PlanPart part) {
  auto pick = [part](const MaskPlan& p) -> const std::vector<std::size_t>& {
    switch (part) {
      case PlanPart::Visible: return p.visible;
      case PlanPart::Masked: return p.masked;
      case PlanPart::Predicted: return p.predicted;
    }
    return p.visible;
  };
  TokenIndex idx;
  idx.batch = plans.size();
  idx.rows = plans.empty() ? 0 : pick(plans[0]).size();
  idx.flat.reserve(idx.batch * idx.rows);
  for (const auto& plan : plans) {
    const auto& rows = pick(plan);
    if (rows.size() != idx.rows) {
      throw ShapeError("plan_index: plans in one batch disagree on set size (" + std::to_string(rows.size()) +
                       " vs " + std::to_string(idx.rows) + ")");
    }
    idx.flat.insert(idx.flat.end(), rows.begin(), rows.end());
  }
  return idx;
}

}  // namespace cmae
