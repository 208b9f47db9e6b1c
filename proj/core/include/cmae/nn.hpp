// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Transformer building blocks. Modules are plain structs of parameter
// handles; copying a module shares its parameters.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cmae/ops.hpp"
#include "cmae/rng.hpp"

namespace cmae {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;
};

template <typename T>
using ParamList = std::vector<Param<T>>;

/// Leaf tensor with requires_grad set.
template <typename T>
Tensor<T> make_param(Shape shape, std::vector<T> values);

/// Truncated-normal (std 0.02) parameter.
template <typename T>
Tensor<T> trunc_normal_param(Shape shape, CounterRng& rng, double std = 0.02);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, CounterRng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = T(1e-6);

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias, eps); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct Mlp {
  Linear<T> fc1;
  Linear<T> fc2;

  Mlp() = default;
  Mlp(std::size_t dim, double ratio, CounterRng& rng);

  Tensor<T> operator()(const Tensor<T>& x) const { return fc2(gelu(fc1(x))); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Multi-head attention with separate projections. Keys and values are
/// projected from `kv_dim` channels to `dim`, so cross-attention over wider
/// encoder features needs no separate adapter.
template <typename T>
struct MultiHeadAttention {
  Linear<T> q;
  Linear<T> k;
  Linear<T> v;
  Linear<T> out;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t kv_dim, std::size_t heads, CounterRng& rng);

  Tensor<T> operator()(const Tensor<T>& queries, const Tensor<T>& context,
                       std::vector<T>* probs = nullptr) const;
  void collect(const std::string& prefix, ParamList<T>& out_params) const;
};

/// Pre-norm block: x + attn(LN(x)), then x + mlp(LN(x)).
template <typename T>
struct SelfAttentionBlock {
  LayerNorm<T> norm1;
  MultiHeadAttention<T> attn;
  LayerNorm<T> norm2;
  Mlp<T> mlp;

  SelfAttentionBlock() = default;
  SelfAttentionBlock(std::size_t dim, std::size_t heads, double mlp_ratio, CounterRng& rng);

  Tensor<T> operator()(const Tensor<T>& x, std::vector<T>* probs = nullptr) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Decoder block whose queries never attend to each other:
/// x + cross(LN(x), kv), then x + mlp(LN(x)). With `with_self`, a
/// non-causal x + self(LN(x)) step runs first.
template <typename T>
struct CrossAttentionBlock {
  bool with_self = false;
  LayerNorm<T> norm_self;
  MultiHeadAttention<T> self_attn;
  LayerNorm<T> norm1;
  MultiHeadAttention<T> cross_attn;
  LayerNorm<T> norm2;
  Mlp<T> mlp;

  CrossAttentionBlock() = default;
  CrossAttentionBlock(std::size_t dim, std::size_t kv_dim, std::size_t heads, double mlp_ratio, bool with_self,
                      CounterRng& rng);

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& kv) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

}  // namespace cmae
