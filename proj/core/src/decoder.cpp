// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/decoder.hpp"

#include <cmath>

#include "cmae/errors.hpp"

namespace cmae {

std::string_view variant_name(DecoderVariant variant) {
  switch (variant) {
    case DecoderVariant::SelfAttn:
      return "self";
    case DecoderVariant::CrossAttn:
      return "cross";
    case DecoderVariant::CrossPlusSelf:
      return "cross_self";
  }
  return "?";
}

DecoderVariant parse_variant(std::string_view name) {
  if (name == "self" || name == "self_attn") return DecoderVariant::SelfAttn;
  if (name == "cross" || name == "cross_attn") return DecoderVariant::CrossAttn;
  if (name == "cross_self" || name == "cross_plus_self") return DecoderVariant::CrossPlusSelf;
  throw ConfigError("unknown decoder variant '" + std::string(name) + "' (expected self, cross or cross_self)");
}

void DecoderConfig::validate(const EncoderConfig& encoder) const {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("decoder: dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (dim % 4 != 0) throw ConfigError("decoder: dim must be a multiple of 4 for the sin/cos table");
  const std::size_t k = resolved_fused_maps(encoder.depth);
  if (k < 1 || k > encoder.depth + 1) {
    throw ConfigError("decoder: fused maps " + std::to_string(k) + " outside [1, " +
                      std::to_string(encoder.depth + 1) + "]");
  }
}

std::vector<std::size_t> select_feature_maps(std::size_t encoder_depth, std::size_t k) {
  if (k < 1 || k > encoder_depth + 1) {
    throw ConfigError("select_feature_maps: cannot pick " + std::to_string(k) + " of " +
                      std::to_string(encoder_depth + 1) + " maps");
  }
  if (k == 1) return {encoder_depth};
  std::vector<std::size_t> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    out[j] = static_cast<std::size_t>(
        std::lround(static_cast<double>(j * encoder_depth) / static_cast<double>(k - 1)));
  }
  return out;
}

template <typename T>
InterBlockFusion<T>::InterBlockFusion(std::size_t decoder_depth, std::size_t encoder_depth, std::size_t k,
                                      std::size_t enc_dim, CounterRng& rng)
    : selection(select_feature_maps(encoder_depth, k)), depth(decoder_depth), norm(enc_dim) {
  if (k > 1) {
    const double std = 1.0 / std::sqrt(static_cast<double>(k));
    std::vector<T> w(decoder_depth * k);
    for (auto& v : w) v = static_cast<T>(rng.normal() * std);
    weight = make_param<T>({decoder_depth, k}, std::move(w));
  }
}

template <typename T>
std::vector<Tensor<T>> InterBlockFusion<T>::pre_norm(const EncoderFeatures<T>& features) const {
  for (std::size_t s : selection) {
    if (s >= features.maps.size()) {
      throw ConfigError("interblock fusion: map " + std::to_string(s) + " requested, encoder produced " +
                        std::to_string(features.maps.size()));
    }
  }
  if (depth == 0) return {};
  if (!weight.defined()) return std::vector<Tensor<T>>(depth, features.maps[selection.front()]);
  if (weight.dim(0) != depth || weight.dim(1) != selection.size()) {
    throw ConfigError("interblock fusion: weight " + shape_str(weight.shape()) + " does not match " +
                      std::to_string(depth) + " blocks x " + std::to_string(selection.size()) + " maps");
  }
  std::vector<Tensor<T>> sources;
  sources.reserve(selection.size());
  for (std::size_t s : selection) sources.push_back(features.maps[s]);
  const Shape map_shape = sources.front().shape();
  const std::size_t per_map = shape_numel(map_shape);
  const Tensor<T> stacked = reshape(stack<T>(sources), {selection.size(), per_map});
  Shape fused_shape{depth};
  fused_shape.insert(fused_shape.end(), map_shape.begin(), map_shape.end());
  const Tensor<T> fused = reshape(matmul(weight, stacked), fused_shape);
  std::vector<Tensor<T>> out;
  out.reserve(depth);
  for (std::size_t d = 0; d < depth; ++d) out.push_back(select(fused, d));
  return out;
}

template <typename T>
std::vector<Tensor<T>> InterBlockFusion<T>::operator()(const EncoderFeatures<T>& features) const {
  auto maps = pre_norm(features);
  if (!weight.defined() && !maps.empty()) {
    const Tensor<T> shared = norm(maps.front());
    for (auto& m : maps) m = shared;
    return maps;
  }
  for (auto& m : maps) m = norm(m);
  return maps;
}

template <typename T>
void InterBlockFusion<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  if (weight.defined()) out.push_back({prefix + ".weight", weight, true});
  norm.collect(prefix + ".norm", out);
}

namespace {

void check_plans(std::span<const MaskPlan> plans, std::size_t num_patches, std::size_t batch) {
  if (plans.size() != batch) {
    throw ConfigError("decoder: " + std::to_string(plans.size()) + " plans for a batch of " + std::to_string(batch));
  }
  for (const auto& plan : plans) {
    if (plan.num_tokens != num_patches) {
      throw ConfigError("decoder: mask plan covers " + std::to_string(plan.num_tokens) + " tokens, model has " +
                        std::to_string(num_patches));
    }
  }
}

TokenIndex row_range(std::size_t batch, std::size_t first, std::size_t count) {
  TokenIndex idx;
  idx.batch = batch;
  idx.rows = count;
  idx.flat.resize(batch * count);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < count; ++r) idx.flat[b * count + r] = first + r;
  }
  return idx;
}

template <typename T>
Tensor<T> fixed_pos_table(std::size_t grid, std::size_t dim) {
  const auto table = pos_embed_2d(grid, grid, dim);
  return Tensor<T>({grid * grid, dim}, std::vector<T>(table.begin(), table.end()));
}

}  // namespace

template <typename T>
SelfDecoder<T>::SelfDecoder(const DecoderConfig& config, const EncoderConfig& encoder, CounterRng& rng) {
  config.validate(encoder);
  embed = Linear<T>(encoder.dim, config.dim, rng);
  mask_token = trunc_normal_param<T>({config.dim}, rng);
  pos_table = fixed_pos_table<T>(encoder.grid(), config.dim);
  for (std::size_t i = 0; i < config.depth; ++i) blocks.emplace_back(config.dim, config.heads, config.mlp_ratio, rng);
  head = ReconstructionHead<T>(config.dim, encoder.patch_dim(), rng);
}

template <typename T>
Tensor<T> SelfDecoder<T>::operator()(const EncoderFeatures<T>& features, std::span<const MaskPlan> plans,
                                     DecodeTrace<T>* trace) const {
  const Tensor<T>& last = features.last();
  const std::size_t batch = last.dim(0);
  const std::size_t n = pos_table.dim(0);
  check_plans(plans, n, batch);
  const std::size_t num_visible = plans.front().visible.size();
  const std::size_t num_masked = n - num_visible;

  // Visible rows first, then one mask token per masked patch; `restore`
  // reorders that concatenation into patch-position order.
  TokenIndex restore;
  restore.batch = batch;
  restore.rows = n;
  restore.flat.resize(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& plan = plans[b];
    if (plan.visible.size() != num_visible) throw ConfigError("decoder: plans in a batch differ in visible count");
    for (std::size_t i = 0; i < plan.visible.size(); ++i) restore.flat[b * n + plan.visible[i]] = i;
    for (std::size_t i = 0; i < plan.masked.size(); ++i) restore.flat[b * n + plan.masked[i]] = num_visible + i;
  }

  const Tensor<T> x = embed(last);
  const Tensor<T> pieces[] = {gather_rows(x, row_range(batch, 1, num_visible)),
                              expand(mask_token, {batch, num_masked})};
  Tensor<T> seq = add(gather_rows(concat<T>(pieces, 1), restore), pos_table);
  const Tensor<T> with_cls[] = {gather_rows(x, row_range(batch, 0, 1)), seq};
  Tensor<T> h = concat<T>(with_cls, 1);

  if (trace) {
    trace->skip_leading_rows = 1;
    trace->stages.assign(1, h);
    trace->attention.clear();
  }
  for (const auto& block : blocks) {
    std::vector<T> probs;
    h = block(h, trace && trace->record_attention ? &probs : nullptr);
    if (trace) {
      trace->stages.push_back(h);
      if (trace->record_attention) trace->attention.push_back(std::move(probs));
    }
  }
  return head(gather_rows(h, row_range(batch, 1, n)));
}

template <typename T>
void SelfDecoder<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  embed.collect(prefix + ".embed", out);
  out.push_back({prefix + ".mask_token", mask_token, false});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
  head.collect(prefix + ".head", out);
}

template <typename T>
CrossDecoder<T>::CrossDecoder(const DecoderConfig& config, const EncoderConfig& encoder, CounterRng& rng) {
  config.validate(encoder);
  mask_token = trunc_normal_param<T>({config.dim}, rng);
  pos_table = fixed_pos_table<T>(encoder.grid(), config.dim);
  fusion = InterBlockFusion<T>(config.depth, encoder.depth, config.resolved_fused_maps(encoder.depth), encoder.dim,
                               rng);
  const bool with_self = config.variant == DecoderVariant::CrossPlusSelf;
  for (std::size_t i = 0; i < config.depth; ++i) {
    blocks.emplace_back(config.dim, encoder.dim, config.heads, config.mlp_ratio, with_self, rng);
  }
  head = ReconstructionHead<T>(config.dim, encoder.patch_dim(), rng);
}

template <typename T>
Tensor<T> CrossDecoder<T>::operator()(const EncoderFeatures<T>& features, std::span<const MaskPlan> plans,
                                      DecodeTrace<T>* trace) const {
  const std::size_t batch = features.maps.front().dim(0);
  check_plans(plans, pos_table.dim(0), batch);
  for (const auto& plan : plans) {
    if (plan.predicted.empty()) throw ConfigError("cross decoder: empty predicted set");
  }
  const TokenIndex predicted = plan_index(plans, PlanPart::Predicted);
  Tensor<T> q = add(expand(mask_token, {batch, predicted.rows}), embedding(pos_table, predicted));
  const auto kv = fusion(features);

  if (trace) {
    trace->skip_leading_rows = 0;
    trace->stages.assign(1, q);
    trace->attention.clear();
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    q = blocks[i](q, kv[i]);
    if (trace) trace->stages.push_back(q);
  }
  return head(q);
}

template <typename T>
void CrossDecoder<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".mask_token", mask_token, false});
  fusion.collect(prefix + ".fusion", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
  head.collect(prefix + ".head", out);
}

template struct InterBlockFusion<float>;
template struct InterBlockFusion<double>;
template class SelfDecoder<float>;
template class SelfDecoder<double>;
template class CrossDecoder<float>;
template class CrossDecoder<double>;

}  // namespace cmae
