// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cmae/errors.hpp"

namespace cmae {

GroupMeans attention_group_means(std::span<const double> map, const MaskPlan& plan) {
  const std::size_t len = plan.num_tokens + 1;
  if (map.size() != len * len) {
    throw ConfigError("attention_group_means: map of " + std::to_string(map.size()) + " entries is not " +
                      std::to_string(len) + "x" + std::to_string(len));
  }
  if (plan.masked.empty()) return {};
  double to_mask = 0.0;
  double to_visible = 0.0;
  for (std::size_t i : plan.masked) {
    const double* row = map.data() + (1 + i) * len;
    to_visible += row[0];
    for (std::size_t j : plan.visible) to_visible += row[1 + j];
    for (std::size_t j : plan.masked) to_mask += row[1 + j];
  }
  const auto m = static_cast<double>(plan.masked.size());
  const auto v = static_cast<double>(plan.visible.size() + 1);
  return {to_mask / (m * m), to_visible / (m * v)};
}

template <typename T>
AttentionStats attention_stats(const MaskedAutoencoder<T>& model, const Tensor<T>& patches, double mask_ratio,
                               std::uint64_t seed, std::size_t batch_size) {
  if (model.variant() != DecoderVariant::SelfAttn) {
    throw ConfigError("attention_stats: needs the self-attention decoder; cross-attention decoders have no "
                      "mask-to-mask attention");
  }
  if (patches.rank() != 3 || batch_size == 0) throw ConfigError("attention_stats: expected [B, N, patch_dim] patches");
  const std::size_t images = patches.dim(0);
  const std::size_t n = patches.dim(1);
  const std::size_t pd = patches.dim(2);
  const std::size_t len = n + 1;
  const std::size_t heads = model.config().decoder.heads;
  const std::size_t depth = model.config().decoder.depth;
  if (depth == 0) throw ConfigError("attention_stats: decoder has no blocks");

  NoGradGuard no_grad;
  GroupMeans sum;
  const auto all = patches.data();
  for (std::size_t first = 0; first < images; first += batch_size) {
    const std::size_t count = std::min(batch_size, images - first);
    std::vector<MaskPlan> plans;
    for (std::size_t b = 0; b < count; ++b) {
      plans.push_back(make_mask_plan(n, mask_ratio, mask_ratio, derive_seed({seed, first + b})));
    }
    const Tensor<T> batch({count, n, pd}, std::vector<T>(all.begin() + static_cast<std::ptrdiff_t>(first * n * pd),
                                                          all.begin() + static_cast<std::ptrdiff_t>((first + count) * n * pd)));
    DecodeTrace<T> trace;
    trace.record_attention = true;
    model.predict(batch, plans, &trace);
    std::vector<double> map(len * len);
    for (std::size_t b = 0; b < count; ++b) {
      GroupMeans image;
      for (const auto& probs : trace.attention) {
        for (std::size_t h = 0; h < heads; ++h) {
          const T* src = probs.data() + (b * heads + h) * len * len;
          std::copy(src, src + len * len, map.begin());
          const GroupMeans g = attention_group_means(map, plans[b]);
          image.mask_to_mask += g.mask_to_mask;
          image.mask_to_visible += g.mask_to_visible;
        }
      }
      const auto maps = static_cast<double>(depth * heads);
      sum.mask_to_mask += image.mask_to_mask / maps;
      sum.mask_to_visible += image.mask_to_visible / maps;
    }
  }
  AttentionStats stats;
  stats.images_seen = images;
  stats.seq_len = len;
  const auto count = static_cast<double>(images);
  stats.per_pair = {sum.mask_to_mask / count, sum.mask_to_visible / count};
  const auto l = static_cast<double>(len);
  stats.per_pair_times_seqlen = {stats.per_pair.mask_to_mask * l, stats.per_pair.mask_to_visible * l};
  return stats;
}

ReconstructionStack ReconstructionStack::denormalized(const PatchStats& stats) const {
  ReconstructionStack out = *this;
  auto scale_rows = [&](std::vector<double>& values, bool shift) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t pos = rows[r];
      if (pos >= stats.mean.size()) throw ConfigError("denormalized: patch stats do not cover row positions");
      for (std::size_t c = 0; c < patch_dim; ++c) {
        double& v = values[r * patch_dim + c];
        v = v * stats.std[pos] + (shift ? stats.mean[pos] : 0.0);
      }
    }
  };
  scale_rows(out.base, true);
  scale_rows(out.total, true);
  for (auto& c : out.contributions) scale_rows(c, false);
  return out;
}

template <typename T>
std::vector<ReconstructionStack> per_block_decomposition(const MaskedAutoencoder<T>& model, const Tensor<T>& patches,
                                                         std::span<const MaskPlan> plans) {
  NoGradGuard no_grad;
  DecodeTrace<T> trace;
  const Tensor<T> pred = model.predict(patches, plans, &trace);
  const ReconstructionHead<T>& head =
      model.variant() == DecoderVariant::SelfAttn ? model.self_decoder.head : model.cross_decoder.head;

  const std::size_t batch = pred.dim(0);
  const std::size_t out_rows = pred.dim(1);
  const std::size_t pd = pred.dim(2);
  const std::size_t dim = trace.stages.front().dim(2);
  const std::size_t len = trace.stages.front().dim(1);
  const std::size_t skip = trace.skip_leading_rows;
  const std::size_t depth = trace.stages.size() - 1;
  const auto gain = head.norm.gain.data();
  const auto beta = head.norm.bias.data();
  const auto w = head.proj.weight.data();
  const auto bias = head.proj.bias.data();
  const double eps = static_cast<double>(head.norm.eps);
  const auto total = pred.data();

  // y[:] = bias_term + sum_c x[c] * W[c][:]
  auto project = [&](const std::vector<double>& x, bool with_bias, double* y) {
    for (std::size_t o = 0; o < pd; ++o) y[o] = with_bias ? static_cast<double>(bias[o]) : 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double xc = x[c];
      const T* wrow = w.data() + c * pd;
      for (std::size_t o = 0; o < pd; ++o) y[o] += xc * static_cast<double>(wrow[o]);
    }
  };
  auto row_stats = [&](const T* x, double& mu, double& sigma) {
    mu = 0.0;
    for (std::size_t c = 0; c < dim; ++c) mu += x[c];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t c = 0; c < dim; ++c) var += (x[c] - mu) * (x[c] - mu);
    sigma = std::sqrt(var / static_cast<double>(dim) + eps);
  };

  std::vector<ReconstructionStack> stacks(batch);
  std::vector<double> x(dim);
  std::vector<double> y(pd);
  std::vector<double> y_true(pd);
  for (std::size_t b = 0; b < batch; ++b) {
    auto& st = stacks[b];
    st.patch_dim = pd;
    if (model.variant() == DecoderVariant::SelfAttn) {
      st.rows.resize(out_rows);
      std::iota(st.rows.begin(), st.rows.end(), std::size_t{0});
    } else {
      st.rows = plans[b].predicted;
    }
    st.base.assign(out_rows * pd, 0.0);
    st.contributions.assign(depth, std::vector<double>(out_rows * pd, 0.0));
    st.total.assign(total.begin() + static_cast<std::ptrdiff_t>(b * out_rows * pd),
                    total.begin() + static_cast<std::ptrdiff_t>((b + 1) * out_rows * pd));
    for (std::size_t r = 0; r < out_rows; ++r) {
      const std::size_t row = skip + r;
      auto stage_row = [&](std::size_t i) { return trace.stages[i].data().data() + (b * len + row) * dim; };
      double mu = 0.0;
      double sigma = 1.0;
      row_stats(stage_row(depth), mu, sigma);

      const T* f0 = stage_row(0);
      for (std::size_t c = 0; c < dim; ++c) x[c] = (f0[c] - mu) / sigma * gain[c] + beta[c];
      project(x, true, st.base.data() + r * pd);
      for (std::size_t i = 1; i <= depth; ++i) {
        const T* cur = stage_row(i);
        const T* prev = stage_row(i - 1);
        for (std::size_t c = 0; c < dim; ++c) {
          x[c] = (static_cast<double>(cur[c]) - static_cast<double>(prev[c])) / sigma * gain[c];
        }
        project(x, false, st.contributions[i - 1].data() + r * pd);
      }

      for (std::size_t i = 0; i <= depth; ++i) {
        const T* f = stage_row(i);
        double own_mu = 0.0;
        double own_sigma = 1.0;
        row_stats(f, own_mu, own_sigma);
        for (std::size_t c = 0; c < dim; ++c) x[c] = (f[c] - mu) / sigma * gain[c] + beta[c];
        project(x, true, y.data());
        for (std::size_t c = 0; c < dim; ++c) x[c] = (f[c] - own_mu) / own_sigma * gain[c] + beta[c];
        project(x, true, y_true.data());
        for (std::size_t o = 0; o < pd; ++o) st.surrogate_gap = std::max(st.surrogate_gap, std::abs(y[o] - y_true[o]));
      }
    }
    for (std::size_t k = 0; k < st.total.size(); ++k) {
      double s = st.base[k];
      for (const auto& c : st.contributions) s += c[k];
      st.identity_error = std::max(st.identity_error, std::abs(s - st.total[k]));
    }
  }
  return stacks;
}

double high_pass_fraction(std::span<const double> image, std::size_t height, std::size_t width,
                          std::size_t channels) {
  if (image.size() != height * width * channels) throw ConfigError("high_pass_fraction: size mismatch");
  double total = 0.0;
  double high = 0.0;
  auto at = [&](std::size_t y, std::size_t x, std::size_t c) { return image[(y * width + x) * channels + c]; };
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = at(y, x, c);
        // Scaled by 1/8, the largest gain of the 5-point stencil, so the
        // ratio stays in [0, 1].
        const double lap = (4.0 * v - at(y > 0 ? y - 1 : y, x, c) - at(y + 1 < height ? y + 1 : y, x, c) -
                           at(y, x > 0 ? x - 1 : x, c) - at(y, x + 1 < width ? x + 1 : x, c)) / 8.0;
        total += v * v;
        high += lap * lap;
      }
    }
  }
  return total > 0.0 ? high / total : 0.0;
}

std::vector<double> interblock_weight_map(const Tensor<float>& weight, bool row_normalize) {
  if (!weight.defined() || weight.rank() != 2 || weight.dim(1) < 2) {
    throw ConfigError("interblock_weight_map: needs more than one fused map");
  }
  const std::size_t rows = weight.dim(0);
  const std::size_t cols = weight.dim(1);
  std::vector<double> out(rows * cols);
  const auto w = weight.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(static_cast<double>(w[i]));
  if (row_normalize) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += out[r * cols + c];
      if (s > 0.0) {
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= s;
      }
    }
  }
  return out;
}

std::vector<double> weight_centroids(std::span<const double> map, std::size_t rows, std::size_t cols) {
  if (map.size() != rows * cols) throw ConfigError("weight_centroids: size mismatch");
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double mass = 0.0;
    double moment = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double m = std::abs(map[r * cols + c]);
      mass += m;
      moment += m * static_cast<double>(c);
    }
    out[r] = mass > 0.0 ? moment / mass : 0.0;
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman: need two equal-length series of 2+ values");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

template AttentionStats attention_stats(const MaskedAutoencoder<float>&, const Tensor<float>&, double, std::uint64_t,
                                        std::size_t);
template AttentionStats attention_stats(const MaskedAutoencoder<double>&, const Tensor<double>&, double,
                                        std::uint64_t, std::size_t);
template std::vector<ReconstructionStack> per_block_decomposition(const MaskedAutoencoder<float>&,
                                                                  const Tensor<float>&, std::span<const MaskPlan>);
template std::vector<ReconstructionStack> per_block_decomposition(const MaskedAutoencoder<double>&,
                                                                  const Tensor<double>&, std::span<const MaskPlan>);

}  // namespace cmae
