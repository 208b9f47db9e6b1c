// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "cmae/parallel.hpp"

namespace cmae::kernels {

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kVecBytes = 64;

template <typename T, std::size_t Bytes = kVecBytes>
using Vec __attribute__((vector_size(Bytes))) = T;

template <typename T>
constexpr std::size_t kLanes = kVecBytes / sizeof(T);

// One tile of C, Rows x (Vecs * lanes). Every element is accumulated as
// c = c + a[p] * b[p] over ascending p, one rounding per multiply and per
// add, the same sequence as the partial tile, so results do not depend on
// where tile boundaries fall.
template <typename T, std::size_t Rows, std::size_t Vecs, std::size_t Bytes = kVecBytes>
inline void tile_fixed(std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
                       T* c, std::size_t ldc, bool accumulate) {
  using V = Vec<T, Bytes>;
  constexpr std::size_t L = Bytes / sizeof(T);
  V acc[Rows][Vecs];
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t v = 0; v < Vecs; ++v) {
      if (accumulate) {
        std::memcpy(&acc[r][v], c + r * ldc + v * L, sizeof(V));
      } else {
        acc[r][v] = V{};
      }
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    V bv[Vecs];
    std::memcpy(bv, b + p * ldb, sizeof(bv));
    for (std::size_t r = 0; r < Rows; ++r) {
      const T av = a[r * lda + p];
      for (std::size_t v = 0; v < Vecs; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) std::memcpy(c + r * ldc, acc[r], sizeof(acc[r]));
}

// Fewer than half a vector of columns: zero-padded lanes, partial stores.
template <typename T, std::size_t Rows>
inline void tile_partial(std::size_t cols, std::size_t k, const T* a, std::size_t lda, const T* b,
                         std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  Vec<T> acc[Rows];
  for (std::size_t r = 0; r < Rows; ++r) {
    acc[r] = Vec<T>{};
    if (accumulate) {
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] = c[r * ldc + j];
    }
  }
  if (cols == 1) {
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t r = 0; r < Rows; ++r) acc[r][0] += a[r * lda + p] * b[p * ldb];
    }
  } else {
    for (std::size_t p = 0; p < k; ++p) {
      Vec<T> bv{};
      for (std::size_t j = 0; j < cols; ++j) bv[j] = b[p * ldb + j];
      for (std::size_t r = 0; r < Rows; ++r) acc[r] += a[r * lda + p] * bv;
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
  }
}

template <typename T, std::size_t Rows>
inline void tile_rows(std::size_t cols, std::size_t k, const T* a, std::size_t lda, const T* b,
                      std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  constexpr std::size_t L = kLanes<T>;
  std::size_t j = 0;
  for (; j + 4 * L <= cols; j += 4 * L) tile_fixed<T, Rows, 4>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
  switch ((cols - j) / L) {
    case 3: tile_fixed<T, Rows, 3>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); j += 3 * L; break;
    case 2: tile_fixed<T, Rows, 2>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); j += 2 * L; break;
    case 1: tile_fixed<T, Rows, 1>(k, a, lda, b + j, ldb, c + j, ldc, accumulate); j += L; break;
    default: break;
  }
  if (cols - j >= L / 2) {
    tile_fixed<T, Rows, 1, kVecBytes / 2>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    j += L / 2;
  }
  if (j < cols) tile_partial<T, Rows>(cols - j, k, a, lda, b + j, ldb, c + j, ldc, accumulate);
}

template <typename T>
void gemm_rows(std::size_t row_begin, std::size_t row_end, std::size_t n, std::size_t k,
               const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
               bool accumulate) {
  for (std::size_t i0 = row_begin; i0 < row_end; i0 += kRowBlock) {
    const T* ap = a + i0 * lda;
    T* cp = c + i0 * ldc;
    switch (std::min(kRowBlock, row_end - i0)) {
      case 4: tile_rows<T, 4>(n, k, ap, lda, b, ldb, cp, ldc, accumulate); break;
      case 3: tile_rows<T, 3>(n, k, ap, lda, b, ldb, cp, ldc, accumulate); break;
      case 2: tile_rows<T, 2>(n, k, ap, lda, b, ldb, cp, ldc, accumulate); break;
      default: tile_rows<T, 1>(n, k, ap, lda, b, ldb, cp, ldc, accumulate); break;
    }
  }
}

}  // namespace

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T{0});
    }
    return;
  }
  const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
  const std::size_t work_per_block = kRowBlock * n * k;
  const std::size_t min_blocks = std::max<std::size_t>(1, (1u << 18) / std::max<std::size_t>(1, work_per_block));
  parallel_for(blocks, min_blocks, [&](std::size_t begin, std::size_t end) {
    gemm_rows(begin * kRowBlock, std::min(m, end * kRowBlock), n, k, a, lda, b, ldb, c, ldc,
              accumulate);
  });
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::size_t ld_src, T* dst,
               std::size_t ld_dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
    const std::size_t i1 = std::min(rows, i0 + kTile);
    for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
      const std::size_t j1 = std::min(cols, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * ld_dst + i] = src[i * ld_src + j];
      }
    }
  }
}

template void gemm<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                          const float*, std::size_t, float*, std::size_t, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                           const double*, std::size_t, double*, std::size_t, bool);
template void transpose<float>(std::size_t, std::size_t, const float*, std::size_t, float*,
                               std::size_t);
template void transpose<double>(std::size_t, std::size_t, const double*, std::size_t, double*,
                                std::size_t);

}  // namespace cmae::kernels
