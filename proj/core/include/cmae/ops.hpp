// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op records its adjoint when any
// input requires grad. Broadcasting is limited to leading axes: the second
// operand of add/sub/mul may have a shape equal to a trailing suffix of the
// first operand's shape.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmae/tensor.hpp"

namespace cmae {

/// Per-batch row indices, `rows` entries for each of `batch` items.
struct TokenIndex {
  std::size_t batch = 0;
  std::size_t rows = 0;
  std::vector<std::size_t> flat;

  std::size_t operator()(std::size_t b, std::size_t r) const { return flat[b * rows + r]; }
};

/// [..., M, K] x [..., K, P] -> [..., M, P]. Leading extents must match, or
/// one operand must be a plain matrix shared across the other's batch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Swaps two axes (materialized copy).
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0 = -2, int axis1 = -1);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Concatenates along `axis`; all other extents must agree.
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int axis);
/// Stacks equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> parts);
/// Slice `index` of the leading axis.
template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t index);
/// Repeats `x` across new leading axes, e.g. [C] -> [B, L, C].
template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& leading);

/// x: [B, L, C], index rows per batch -> [B, K, C]. Adjoint is scatter-add.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const TokenIndex& index);
/// table: [V, C], index -> [B, K, C]. Adjoint is scatter-add into the table.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const TokenIndex& index);

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-6));
/// Exact form x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
/// Mean over `axis`, which is removed from the shape.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis);
/// Population variance over the last axis, which is removed.
template <typename T>
Tensor<T> var_lastdim(const Tensor<T>& x);

/// Mean cross-entropy of logits [B, C] against integer labels.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Multi-head scaled dot-product attention.
///
/// q: [B, Lq, d], k and v: [B, Lk, d] with d divisible by `heads`. Each head
/// attends over its own d/heads channel slice. When `probs_out` is given it
/// receives the softmax weights laid out as [B, heads, Lq, Lk].
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, std::vector<T>* probs_out = nullptr);

}  // namespace cmae
