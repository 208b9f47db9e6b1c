// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major kernels behind the tensor ops.
//
// gemm accumulates every output element over k in ascending order, and the
// arithmetic applied to one row never depends on how many other rows are in
// the call. That makes a row of A*B bit-identical whether it is computed
// alone or as part of a larger batch.

#pragma once

#include <cstddef>

namespace cmae::kernels {

/// C = A*B (or C += A*B when `accumulate`). A is M x K, B is K x N.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

/// dst (cols x rows) = transpose of src (rows x cols).
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::size_t ld_src, T* dst,
               std::size_t ld_dst);

}  // namespace cmae::kernels
