// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/model.hpp"

#include <map>
#include <string>

#include "cmae/errors.hpp"
#include "cmae/objective.hpp"
#include "cmae/ops.hpp"

namespace cmae {

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate(encoder);
}

ModelConfig make_model_config(DecoderVariant variant) {
  ModelConfig config;
  config.decoder.variant = variant;
  config.encoder.final_norm = variant == DecoderVariant::SelfAttn;
  return config;
}

template <typename T>
MaskedAutoencoder<T>::MaskedAutoencoder(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  CounterRng enc_rng(derive_seed({seed, 1}));
  encoder = Encoder<T>(config_.encoder, enc_rng);
  CounterRng dec_rng(derive_seed({seed, 2}));
  if (config_.decoder.variant == DecoderVariant::SelfAttn) {
    self_decoder = SelfDecoder<T>(config_.decoder, config_.encoder, dec_rng);
  } else {
    cross_decoder = CrossDecoder<T>(config_.decoder, config_.encoder, dec_rng);
  }
}

template <typename T>
EncoderFeatures<T> MaskedAutoencoder<T>::encode(const Tensor<T>& patches, std::span<const MaskPlan> plans) const {
  return encoder.encode(patches, plans);
}

template <typename T>
Tensor<T> MaskedAutoencoder<T>::decode(const EncoderFeatures<T>& features, std::span<const MaskPlan> plans,
                                       DecodeTrace<T>* trace) const {
  if (config_.decoder.variant == DecoderVariant::SelfAttn) return self_decoder(features, plans, trace);
  return cross_decoder(features, plans, trace);
}

template <typename T>
Tensor<T> MaskedAutoencoder<T>::predict(const Tensor<T>& patches, std::span<const MaskPlan> plans,
                                        DecodeTrace<T>* trace) const {
  return decode(encode(patches, plans), plans, trace);
}

template <typename T>
Tensor<T> MaskedAutoencoder<T>::targets(const Tensor<T>& patches) const {
  if (config_.norm_pix_loss) return patch_normalize(patches).values;
  return patches.detach();
}

template <typename T>
Tensor<T> MaskedAutoencoder<T>::loss(const Tensor<T>& patches, std::span<const MaskPlan> plans) const {
  return masked_mse_loss(predict(patches, plans), targets(patches), plans);
}

template <typename T>
ParamList<T> MaskedAutoencoder<T>::parameters() const {
  ParamList<T> out;
  encoder.collect("encoder", out);
  if (config_.decoder.variant == DecoderVariant::SelfAttn) {
    self_decoder.collect("decoder", out);
  } else {
    cross_decoder.collect("decoder", out);
  }
  return out;
}

template <typename T>
std::vector<NamedArray> MaskedAutoencoder<T>::state() const {
  std::vector<NamedArray> out;
  for (const auto& p : parameters()) {
    NamedArray rec;
    rec.name = p.name;
    rec.shape.assign(p.tensor.shape().begin(), p.tensor.shape().end());
    const auto d = p.tensor.data();
    rec.values.assign(d.begin(), d.end());
    out.push_back(std::move(rec));
  }
  return out;
}

template <typename T>
void MaskedAutoencoder<T>::load_state(std::span<const NamedArray> records, std::string_view prefix) {
  std::map<std::string, const NamedArray*, std::less<>> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (auto& p : parameters()) {
    if (!p.name.starts_with(prefix)) continue;
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint has no parameter '" + p.name + "'");
    const NamedArray& rec = *it->second;
    const Shape shape(rec.shape.begin(), rec.shape.end());
    if (shape != p.tensor.shape()) {
      throw DataError("checkpoint parameter '" + p.name + "' has shape " + shape_str(shape) + ", model expects " +
                      shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(rec.values[i]);
  }
}

template <typename Dst, typename Src>
std::size_t copy_params_by_name(const ParamList<Dst>& dst, const ParamList<Src>& src) {
  std::map<std::string, const Param<Src>*, std::less<>> by_name;
  for (const auto& p : src) by_name[p.name] = &p;
  std::size_t copied = 0;
  for (const auto& p : dst) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) continue;
    const auto& from = it->second->tensor;
    if (from.shape() != p.tensor.shape()) {
      throw ConfigError("copy_params_by_name: '" + p.name + "' has shape " + shape_str(from.shape()) + " vs " +
                        shape_str(p.tensor.shape()));
    }
    Tensor<Dst> to = p.tensor;
    auto out = to.mutable_data();
    const auto in = from.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Dst>(in[i]);
    ++copied;
  }
  return copied;
}

template class MaskedAutoencoder<float>;
template class MaskedAutoencoder<double>;
template std::size_t copy_params_by_name(const ParamList<float>&, const ParamList<float>&);
template std::size_t copy_params_by_name(const ParamList<double>&, const ParamList<double>&);
template std::size_t copy_params_by_name(const ParamList<double>&, const ParamList<float>&);
template std::size_t copy_params_by_name(const ParamList<float>&, const ParamList<double>&);

}  // namespace cmae
