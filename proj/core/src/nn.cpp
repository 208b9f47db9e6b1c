// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/nn.hpp"

#include <cmath>

namespace cmae {

template <typename T>
Tensor<T> make_param(Shape shape, std::vector<T> values) {
  Tensor<T> t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> trunc_normal_param(Shape shape, CounterRng& rng, double std) {
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.truncated_normal(std));
  return make_param<T>(std::move(shape), std::move(values));
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, CounterRng& rng)
    : weight(trunc_normal_param<T>({in, out}, rng)), bias(make_param<T>({out}, std::vector<T>(out, T{0}))) {}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return add(matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, false});
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim)
    : gain(make_param<T>({dim}, std::vector<T>(dim, T{1}))), bias(make_param<T>({dim}, std::vector<T>(dim, T{0}))) {}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".gain", gain, false});
  out.push_back({prefix + ".bias", bias, false});
}

template <typename T>
Mlp<T>::Mlp(std::size_t dim, double ratio, CounterRng& rng) {
  const auto hidden = static_cast<std::size_t>(std::lround(static_cast<double>(dim) * ratio));
  fc1 = Linear<T>(dim, hidden, rng);
  fc2 = Linear<T>(hidden, dim, rng);
}

template <typename T>
void Mlp<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(std::size_t dim, std::size_t kv_dim, std::size_t num_heads,
                                          CounterRng& rng)
    : q(dim, dim, rng), k(kv_dim, dim, rng), v(kv_dim, dim, rng), out(dim, dim, rng), heads(num_heads) {}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const Tensor<T>& queries, const Tensor<T>& context,
                                            std::vector<T>* probs) const {
  return out(attention(q(queries), k(context), v(context), heads, probs));
}

template <typename T>
void MultiHeadAttention<T>::collect(const std::string& prefix, ParamList<T>& out_params) const {
  q.collect(prefix + ".q", out_params);
  k.collect(prefix + ".k", out_params);
  v.collect(prefix + ".v", out_params);
  out.collect(prefix + ".out", out_params);
}

template <typename T>
SelfAttentionBlock<T>::SelfAttentionBlock(std::size_t dim, std::size_t heads, double mlp_ratio, CounterRng& rng)
    : norm1(dim), attn(dim, dim, heads, rng), norm2(dim), mlp(dim, mlp_ratio, rng) {}

template <typename T>
Tensor<T> SelfAttentionBlock<T>::operator()(const Tensor<T>& x, std::vector<T>* probs) const {
  const Tensor<T> h = norm1(x);
  const Tensor<T> y = add(x, attn(h, h, probs));
  return add(y, mlp(norm2(y)));
}

template <typename T>
void SelfAttentionBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  norm1.collect(prefix + ".norm1", out);
  attn.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

template <typename T>
CrossAttentionBlock<T>::CrossAttentionBlock(std::size_t dim, std::size_t kv_dim, std::size_t heads, double mlp_ratio,
                                            bool self, CounterRng& rng)
    : with_self(self) {
  if (with_self) {
    norm_self = LayerNorm<T>(dim);
    self_attn = MultiHeadAttention<T>(dim, dim, heads, rng);
  }
  norm1 = LayerNorm<T>(dim);
  cross_attn = MultiHeadAttention<T>(dim, kv_dim, heads, rng);
  norm2 = LayerNorm<T>(dim);
  mlp = Mlp<T>(dim, mlp_ratio, rng);
}

template <typename T>
Tensor<T> CrossAttentionBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& kv) const {
  Tensor<T> y = x;
  if (with_self) {
    const Tensor<T> h = norm_self(y);
    y = add(y, self_attn(h, h));
  }
  y = add(y, cross_attn(norm1(y), kv));
  return add(y, mlp(norm2(y)));
}

template <typename T>
void CrossAttentionBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  if (with_self) {
    norm_self.collect(prefix + ".norm_self", out);
    self_attn.collect(prefix + ".self_attn", out);
  }
  norm1.collect(prefix + ".norm1", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

#define CMAE_INSTANTIATE_NN(T)                                                     \
  template Tensor<T> make_param<T>(Shape, std::vector<T>);                         \
  template Tensor<T> trunc_normal_param<T>(Shape, CounterRng&, double);            \
  template struct Linear<T>;                                                       \
  template struct LayerNorm<T>;                                                    \
  template struct Mlp<T>;                                                          \
  template struct MultiHeadAttention<T>;                                           \
  template struct SelfAttentionBlock<T>;                                           \
  template struct CrossAttentionBlock<T>;

CMAE_INSTANTIATE_NN(float)
CMAE_INSTANTIATE_NN(double)

#undef CMAE_INSTANTIATE_NN

}  // namespace cmae
