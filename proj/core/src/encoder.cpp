// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/encoder.hpp"

#include <numeric>

#include "cmae/errors.hpp"

namespace cmae {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("encoder: image size " + std::to_string(image_size) + " is not divisible by patch size " +
                      std::to_string(patch_size));
  }
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("encoder: dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (dim % 4 != 0) throw ConfigError("encoder: dim must be a multiple of 4 for the sin/cos table");
  if (channels == 0) throw ConfigError("encoder: need at least one channel");
}

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& config, CounterRng& rng) : config_(config) {
  config_.validate();
  patch_embed = Linear<T>(config_.patch_dim(), config_.dim, rng);
  cls_token = trunc_normal_param<T>({config_.dim}, rng);
  const auto table = pos_embed_2d(config_.grid(), config_.grid(), config_.dim);
  pos_table = Tensor<T>({config_.num_patches(), config_.dim}, std::vector<T>(table.begin(), table.end()));
  for (std::size_t i = 0; i < config_.depth; ++i) {
    blocks.emplace_back(config_.dim, config_.heads, config_.mlp_ratio, rng);
  }
  if (config_.final_norm) norm = LayerNorm<T>(config_.dim);
}

template <typename T>
EncoderFeatures<T> Encoder<T>::encode(const Tensor<T>& patches, std::span<const MaskPlan> plans) const {
  if (patches.rank() != 3 || patches.dim(0) != plans.size() || patches.dim(1) != config_.num_patches() ||
      patches.dim(2) != config_.patch_dim()) {
    throw ConfigError("encode: patches " + shape_str(patches.shape()) + " do not match " +
                      std::to_string(plans.size()) + " plans over " + std::to_string(config_.num_patches()) +
                      " patches of " + std::to_string(config_.patch_dim()) + " values");
  }
  for (const auto& plan : plans) {
    if (plan.num_tokens != config_.num_patches()) {
      throw ConfigError("encode: mask plan covers " + std::to_string(plan.num_tokens) + " tokens, encoder has " +
                        std::to_string(config_.num_patches()));
    }
  }
  return run(patches, plan_index(plans, PlanPart::Visible));
}

template <typename T>
EncoderFeatures<T> Encoder<T>::encode_all(const Tensor<T>& patches) const {
  if (patches.rank() != 3 || patches.dim(1) != config_.num_patches() || patches.dim(2) != config_.patch_dim()) {
    throw ConfigError("encode_all: unexpected patches " + shape_str(patches.shape()));
  }
  TokenIndex all;
  all.batch = patches.dim(0);
  all.rows = config_.num_patches();
  all.flat.resize(all.batch * all.rows);
  for (std::size_t b = 0; b < all.batch; ++b) {
    std::iota(all.flat.begin() + static_cast<std::ptrdiff_t>(b * all.rows),
              all.flat.begin() + static_cast<std::ptrdiff_t>((b + 1) * all.rows), std::size_t{0});
  }
  return run(patches, all);
}

template <typename T>
EncoderFeatures<T> Encoder<T>::run(const Tensor<T>& patches, const TokenIndex& visible) const {
  const std::size_t batch = visible.batch;
  Tensor<T> x = add(patch_embed(gather_rows(patches, visible)), embedding(pos_table, visible));
  const Tensor<T> cls = expand(cls_token, {batch, 1});
  const Tensor<T> parts[] = {cls, x};
  x = concat<T>(parts, 1);

  EncoderFeatures<T> features;
  features.maps.reserve(blocks.size() + 1);
  features.maps.push_back(x);
  for (const auto& block : blocks) {
    x = block(x);
    features.maps.push_back(x);
  }
  if (config_.final_norm) features.normed_last = norm(x);
  return features;
}

template <typename T>
void Encoder<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  patch_embed.collect(prefix + ".patch_embed", out);
  out.push_back({prefix + ".cls_token", cls_token, false});
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(prefix + ".blocks." + std::to_string(i), out);
  if (config_.final_norm) norm.collect(prefix + ".norm", out);
}

template <typename T>
Tensor<T> patchify_batch(std::span<const T> images, std::size_t batch, const EncoderConfig& config) {
  const auto geom = config.geometry();
  const std::size_t per_image = geom.height * geom.width * geom.channels;
  if (images.size() != batch * per_image) {
    throw ConfigError("patchify_batch: " + std::to_string(images.size()) + " values for " + std::to_string(batch) +
                      " images of " + std::to_string(per_image));
  }
  std::vector<T> out;
  out.reserve(images.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto p = patchify<T>(images.subspan(b * per_image, per_image), geom, config.patch_size);
    out.insert(out.end(), p.begin(), p.end());
  }
  return Tensor<T>({batch, config.num_patches(), config.patch_dim()}, std::move(out));
}

template class Encoder<float>;
template class Encoder<double>;
template Tensor<float> patchify_batch(std::span<const float>, std::size_t, const EncoderConfig&);
template Tensor<double> patchify_batch(std::span<const double>, std::size_t, const EncoderConfig&);

}  // namespace cmae
