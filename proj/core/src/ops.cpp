// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cmae/kernels.hpp"
#include "cmae/parallel.hpp"

namespace cmae {

namespace {

template <typename T>
using NodeT = detail::Node<T>;

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename T>
void accumulate(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

template <typename T>
const Shape& check_broadcast(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!is_suffix(b.shape(), a.shape())) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                     shape_str(a.shape()));
  }
  return a.shape();
}

enum class BinaryKind { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
  const Shape& out_shape = check_broadcast(a, b, name);
  const std::size_t inner = b.numel();
  const std::size_t outer = inner == 0 ? 0 : a.numel() / inner;
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> y(a.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      switch (kind) {
        case BinaryKind::Add: y[base + i] = av[base + i] + bv[i]; break;
        case BinaryKind::Sub: y[base + i] = av[base + i] - bv[i]; break;
        case BinaryKind::Mul: y[base + i] = av[base + i] * bv[i]; break;
      }
    }
  }
  return detail::make_result<T>(out_shape, std::move(y), {a.node(), b.node()},
                                [kind, inner, outer](NodeT<T>& self) {
    const auto& dy = self.grad;
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& da = pa->grad_buffer();
      if (kind == BinaryKind::Mul) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) da[o * inner + i] += dy[o * inner + i] * pb->value[i];
        }
      } else {
        accumulate<T>(da, dy);
      }
    }
    if (pb->requires_grad) {
      auto& db = pb->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const T g = dy[o * inner + i];
          switch (kind) {
            case BinaryKind::Add: db[i] += g; break;
            case BinaryKind::Sub: db[i] -= g; break;
            case BinaryKind::Mul: db[i] += g * pa->value[o * inner + i]; break;
          }
        }
      }
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto fail = [&] {
    throw ShapeError("matmul: incompatible shapes " + shape_str(as) + " and " + shape_str(bs));
  };
  if (as.size() < 2 || bs.size() < 2) fail();
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t p = bs.back();
  if (bs[bs.size() - 2] != k) fail();
  const Shape a_batch(as.begin(), as.end() - 2);
  const Shape b_batch(bs.begin(), bs.end() - 2);

  enum class Mode { Same, SharedB, SharedA };
  Mode mode;
  Shape out_shape;
  if (a_batch == b_batch) {
    mode = Mode::Same;
    out_shape = a_batch;
  } else if (b_batch.empty()) {
    mode = Mode::SharedB;
    out_shape = a_batch;
  } else if (a_batch.empty()) {
    mode = Mode::SharedA;
    out_shape = b_batch;
  } else {
    fail();
  }
  const std::size_t batch = shape_numel(out_shape);
  out_shape.push_back(m);
  out_shape.push_back(p);

  const T* ad = a.data().data();
  const T* bd = b.data().data();
  std::vector<T> y(batch * m * p);
  const std::size_t a_stride = mode == Mode::SharedA ? 0 : m * k;
  const std::size_t b_stride = mode == Mode::SharedB ? 0 : k * p;
  if (mode == Mode::SharedB) {
    kernels::gemm(batch * m, p, k, ad, k, bd, p, y.data(), p, false);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      kernels::gemm(m, p, k, ad + i * a_stride, k, bd + i * b_stride, p, y.data() + i * m * p, p, false);
    }
  }

  return detail::make_result<T>(std::move(out_shape), std::move(y), {a.node(), b.node()},
                                [mode, batch, m, k, p, a_stride, b_stride](NodeT<T>& self) {
    const T* dy = self.grad.data();
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& da = pa->grad_buffer();
      std::vector<T> bt(p * k);
      if (mode == Mode::SharedB) {
        kernels::transpose(k, p, pb->value.data(), p, bt.data(), k);
        kernels::gemm(batch * m, k, p, dy, p, bt.data(), k, da.data(), k, true);
      } else {
        for (std::size_t i = 0; i < batch; ++i) {
          kernels::transpose(k, p, pb->value.data() + i * b_stride, p, bt.data(), k);
          kernels::gemm(m, k, p, dy + i * m * p, p, bt.data(), k, da.data() + i * a_stride, k, true);
        }
      }
    }
    if (pb->requires_grad) {
      auto& db = pb->grad_buffer();
      if (mode == Mode::SharedB) {
        std::vector<T> at(k * batch * m);
        kernels::transpose(batch * m, k, pa->value.data(), k, at.data(), batch * m);
        kernels::gemm(k, p, batch * m, at.data(), batch * m, dy, p, db.data(), p, true);
      } else {
        std::vector<T> at(k * m);
        for (std::size_t i = 0; i < batch; ++i) {
          kernels::transpose(m, k, pa->value.data() + i * a_stride, k, at.data(), m);
          kernels::gemm(k, p, m, at.data(), m, dy + i * m * p, p, db.data() + i * b_stride, p, true);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(b.shape(), a.shape()) && is_suffix(a.shape(), b.shape())) {
    return binary(b, a, BinaryKind::Add, "add");
  }
  return binary(a, b, BinaryKind::Add, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::Sub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_suffix(b.shape(), a.shape()) && is_suffix(a.shape(), b.shape())) {
    return binary(b, a, BinaryKind::Mul, "mul");
  }
  return binary(a, b, BinaryKind::Mul, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const auto xv = x.data();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * factor;
  return detail::make_result<T>(x.shape(), std::move(y), {x.node()}, [factor](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * factor;
  });
}

// ---------------------------------------------------------------------------
// layout

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int axis0, int axis1) {
  const Shape& s = x.shape();
  const std::size_t a0 = normalize_axis(axis0, s.size(), "transpose");
  const std::size_t a1 = normalize_axis(axis1, s.size(), "transpose");
  Shape out_shape = s;
  std::swap(out_shape[a0], out_shape[a1]);
  const std::size_t rank = s.size();

  // out offset -> in offset permutation, computed once and reused backward.
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  std::vector<std::size_t> perm_stride = in_stride;
  std::swap(perm_stride[a0], perm_stride[a1]);
  const std::size_t n = x.numel();
  auto map = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < rank; ++d) off += idx[d] * perm_stride[d];
    (*map)[o] = off;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  const auto xv = x.data();
  std::vector<T> y(n);
  for (std::size_t o = 0; o < n; ++o) y[o] = xv[(*map)[o]];
  return detail::make_result<T>(std::move(out_shape), std::move(y), {x.node()}, [map](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < map->size(); ++o) dx[(*map)[o]] += self.grad[o];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  return detail::make_result<T>(std::move(shape), std::move(y), {x.node()}, [](NodeT<T>& self) {
    accumulate<T>(self.parents[0]->grad_buffer(), self.grad);
  });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  const std::size_t ax = normalize_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> widths;
  for (const auto& part : parts) {
    const Shape& s = part.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == ax || s[d] == first[d];
    if (!ok) {
      throw ShapeError("concat: shape " + shape_str(s) + " does not match " + shape_str(first) +
                       " outside axis " + std::to_string(ax));
    }
    out_shape[ax] += s[ax];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < first.size(); ++d) inner *= first[d];
  for (const auto& part : parts) widths.push_back(part.shape()[ax] * inner);
  const std::size_t row = out_shape[ax] * inner;

  std::vector<T> y(outer * row);
  std::vector<NodePtr<T>> parents;
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pv = parts[pi].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * widths[pi], widths[pi], y.begin() + o * row + offset);
    }
    offset += widths[pi];
    parents.push_back(parts[pi].node());
  }
  return detail::make_result<T>(std::move(out_shape), std::move(y), std::move(parents),
                                [widths, outer, row](NodeT<T>& self) {
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
      auto& parent = self.parents[pi];
      if (parent->requires_grad) {
        auto& dp = parent->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < widths[pi]; ++i) dp[o * widths[pi] + i] += self.grad[o * row + off + i];
        }
      }
      off += widths[pi];
    }
  });
}

template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("stack: no inputs");
  const Shape& s = parts[0].shape();
  for (const auto& part : parts) {
    if (part.shape() != s) {
      throw ShapeError("stack: shape " + shape_str(part.shape()) + " differs from " + shape_str(s));
    }
  }
  const std::size_t n = parts[0].numel();
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  std::vector<T> y(parts.size() * n);
  std::vector<NodePtr<T>> parents;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy(parts[i].data().begin(), parts[i].data().end(), y.begin() + i * n);
    parents.push_back(parts[i].node());
  }
  return detail::make_result<T>(std::move(out_shape), std::move(y), std::move(parents), [n](NodeT<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!self.parents[i]->requires_grad) continue;
      auto& dp = self.parents[i]->grad_buffer();
      for (std::size_t j = 0; j < n; ++j) dp[j] += self.grad[i * n + j];
    }
  });
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t index) {
  const Shape& s = x.shape();
  if (s.empty() || index >= s[0]) {
    throw ShapeError("select: index " + std::to_string(index) + " out of range for " + shape_str(s));
  }
  Shape out_shape(s.begin() + 1, s.end());
  const std::size_t n = shape_numel(out_shape);
  std::vector<T> y(x.data().begin() + index * n, x.data().begin() + (index + 1) * n);
  return detail::make_result<T>(std::move(out_shape), std::move(y), {x.node()}, [index, n](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t j = 0; j < n; ++j) dx[index * n + j] += self.grad[j];
  });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& leading) {
  const std::size_t reps = shape_numel(leading);
  const std::size_t n = x.numel();
  Shape out_shape = leading;
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  std::vector<T> y(reps * n);
  for (std::size_t r = 0; r < reps; ++r) std::copy(x.data().begin(), x.data().end(), y.begin() + r * n);
  return detail::make_result<T>(std::move(out_shape), std::move(y), {x.node()}, [reps, n](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t j = 0; j < n; ++j) dx[j] += self.grad[r * n + j];
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const TokenIndex& index) {
  const Shape& s = x.shape();
  if (s.size() != 3 || index.batch != s[0] || index.flat.size() != index.batch * index.rows) {
    throw ShapeError("gather_rows: index of " + std::to_string(index.batch) + "x" +
                     std::to_string(index.rows) + " does not fit " + shape_str(s));
  }
  const std::size_t len = s[1];
  const std::size_t ch = s[2];
  for (std::size_t i : index.flat) {
    if (i >= len) throw ShapeError("gather_rows: row " + std::to_string(i) + " out of range " + std::to_string(len));
  }
  const auto xv = x.data();
  std::vector<T> y(index.batch * index.rows * ch);
  for (std::size_t b = 0; b < index.batch; ++b) {
    for (std::size_t r = 0; r < index.rows; ++r) {
      std::copy_n(xv.begin() + (b * len + index(b, r)) * ch, ch, y.begin() + (b * index.rows + r) * ch);
    }
  }
  return detail::make_result<T>(Shape{index.batch, index.rows, ch}, std::move(y), {x.node()},
                                [index, len, ch](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t b = 0; b < index.batch; ++b) {
      for (std::size_t r = 0; r < index.rows; ++r) {
        T* dst = dx.data() + (b * len + index(b, r)) * ch;
        const T* src = self.grad.data() + (b * index.rows + r) * ch;
        for (std::size_t c = 0; c < ch; ++c) dst[c] += src[c];
      }
    }
  });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const TokenIndex& index) {
  const Shape& s = table.shape();
  if (s.size() != 2 || index.flat.size() != index.batch * index.rows) {
    throw ShapeError("embedding: table must be [V, C], got " + shape_str(s));
  }
  const std::size_t vocab = s[0];
  const std::size_t ch = s[1];
  for (std::size_t i : index.flat) {
    if (i >= vocab) throw ShapeError("embedding: row " + std::to_string(i) + " out of range " + std::to_string(vocab));
  }
  const auto tv = table.data();
  std::vector<T> y(index.flat.size() * ch);
  for (std::size_t r = 0; r < index.flat.size(); ++r) {
    std::copy_n(tv.begin() + index.flat[r] * ch, ch, y.begin() + r * ch);
  }
  return detail::make_result<T>(Shape{index.batch, index.rows, ch}, std::move(y), {table.node()},
                                [index, ch](NodeT<T>& self) {
    auto& dt = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < index.flat.size(); ++r) {
      for (std::size_t c = 0; c < ch; ++c) dt[index.flat[r] * ch + c] += self.grad[r * ch + c];
    }
  });
}

// ---------------------------------------------------------------------------
// normalization and nonlinearities

namespace {

template <typename T>
void softmax_row(const T* x, T* y, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  const T inv = T{1} / total;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

template <typename T>
void softmax_row_backward(const T* y, const T* dy, T* dx, std::size_t n, T factor) {
  T dot = 0;
  for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) dx[j] += factor * y[j] * (dy[j] - dot);
}

}  // namespace

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("softmax_lastdim: empty last axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<T> y(x.numel());
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) softmax_row(xv + r * n, y.data() + r * n, n);
  return detail::make_result<T>(x.shape(), std::move(y), {x.node()}, [n, rows](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      softmax_row_backward(self.value.data() + r * n, self.grad.data() + r * n, dx.data() + r * n, n, T{1});
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c}) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                     " do not match last extent of " + shape_str(x.shape()));
  }
  if (!(eps > T{0})) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = c == 0 ? 0 : x.numel() / c;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  std::vector<T> y(x.numel());
  const T* xv = x.data().data();
  const T* g = gain.data().data();
  const T* bb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * c;
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(c);
    const T rs = T{1} / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (row[j] - mu) * rs;
      (*xhat)[r * c + j] = h;
      y[r * c + j] = h * g[j] + bb[j];
    }
  }
  return detail::make_result<T>(x.shape(), std::move(y), {x.node(), gain.node(), bias.node()},
                                [c, rows, xhat, rstd](NodeT<T>& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    const T* dy = self.grad.data();
    if (pg->requires_grad) {
      auto& dg = pg->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) dg[j] += dy[r * c + j] * (*xhat)[r * c + j];
      }
    }
    if (pb->requires_grad) {
      auto& db = pb->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) db[j] += dy[r * c + j];
      }
    }
    if (px->requires_grad) {
      auto& dx = px->grad_buffer();
      const T* g = pg->value.data();
      const T inv_c = T{1} / static_cast<T>(c);
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_d = 0;
        T mean_dh = 0;
        for (std::size_t j = 0; j < c; ++j) {
          const T d = dy[r * c + j] * g[j];
          mean_d += d;
          mean_dh += d * (*xhat)[r * c + j];
        }
        mean_d *= inv_c;
        mean_dh *= inv_c;
        for (std::size_t j = 0; j < c; ++j) {
          const T d = dy[r * c + j] * g[j];
          dx[r * c + j] += (*rstd)[r] * (d - mean_d - (*xhat)[r * c + j] * mean_dh);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T{1} / std::numbers::sqrt2_v<T>;
  const auto xv = x.data();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T{0.5} * xv[i] * (T{1} + std::erf(xv[i] * inv_sqrt2));
  return detail::make_result<T>(x.shape(), std::move(y), {x.node()}, [inv_sqrt2](NodeT<T>& self) {
    auto& px = self.parents[0];
    auto& dx = px->grad_buffer();
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const T v = px->value[i];
      const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * v * v);
      dx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return detail::make_result<T>(Shape{}, {total}, {x.node()}, [](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (auto& d : dx) d += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  T total = 0;
  for (T v : x.data()) total += v;
  const T inv = T{1} / static_cast<T>(x.numel());
  return detail::make_result<T>(Shape{}, {total * inv}, {x.node()}, [inv](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    const T g = self.grad[0] * inv;
    for (auto& d : dx) d += g;
  });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis) {
  const Shape& s = x.shape();
  const std::size_t ax = normalize_axis(axis, s.size(), "mean_axis");
  if (s[ax] == 0) throw ShapeError("mean_axis: empty axis");
  std::size_t outer = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= s[d];
  std::size_t inner = 1;
  for (std::size_t d = ax + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[ax];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  const T inv = T{1} / static_cast<T>(n);
  const auto xv = x.data();
  std::vector<T> y(outer * inner, T{0});
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < inner; ++i) y[o * inner + i] += xv[(o * n + j) * inner + i];
    }
  }
  for (auto& v : y) v *= inv;
  return detail::make_result<T>(std::move(out_shape), std::move(y), {x.node()},
                                [outer, inner, n, inv](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < inner; ++i) dx[(o * n + j) * inner + i] += self.grad[o * inner + i] * inv;
      }
    }
  });
}

template <typename T>
Tensor<T> var_lastdim(const Tensor<T>& x) {
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("var_lastdim: empty last axis");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  auto mu = std::make_shared<std::vector<T>>(rows);
  std::vector<T> y(rows);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T m = 0;
    for (std::size_t j = 0; j < c; ++j) m += xv[r * c + j];
    m /= static_cast<T>(c);
    T v = 0;
    for (std::size_t j = 0; j < c; ++j) v += (xv[r * c + j] - m) * (xv[r * c + j] - m);
    (*mu)[r] = m;
    y[r] = v / static_cast<T>(c);
  }
  return detail::make_result<T>(std::move(out_shape), std::move(y), {x.node()}, [c, rows, mu](NodeT<T>& self) {
    auto& px = self.parents[0];
    auto& dx = px->grad_buffer();
    const T f = T{2} / static_cast<T>(c);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += self.grad[r] * f * (px->value[r * c + j] - (*mu)[r]);
    }
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size() || s[0] == 0) {
    throw ShapeError("cross_entropy: logits " + shape_str(s) + " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = s[0];
  const std::size_t c = s[1];
  auto probs = std::make_shared<std::vector<T>>(b * c);
  auto lbl = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  const T* lv = logits.data().data();
  T total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
    softmax_row(lv + i * c, probs->data() + i * c, c);
    T mx = lv[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
    T z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv[i * c + j] - mx);
    total += std::log(z) + mx - lv[i * c + static_cast<std::size_t>(y)];
  }
  const T inv_b = T{1} / static_cast<T>(b);
  return detail::make_result<T>(Shape{}, {total * inv_b}, {logits.node()}, [b, c, probs, lbl, inv_b](NodeT<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    const T g = self.grad[0] * inv_b;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        const T onehot = static_cast<std::size_t>((*lbl)[i]) == j ? T{1} : T{0};
        dx[i * c + j] += g * ((*probs)[i * c + j] - onehot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// attention

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    std::vector<T>* probs_out) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  if (qs.size() != 3 || ks.size() != 3 || v.shape() != ks || qs[0] != ks[0] || qs[2] != ks[2] ||
      heads == 0 || qs[2] % heads != 0) {
    throw ShapeError("attention: q " + shape_str(qs) + ", k " + shape_str(ks) + ", v " + shape_str(v.shape()) +
                     " with " + std::to_string(heads) + " heads");
  }
  const std::size_t batch = qs[0];
  const std::size_t lq = qs[1];
  const std::size_t lk = ks[1];
  const std::size_t d = qs[2];
  const std::size_t dh = d / heads;
  const T scale_factor = T{1} / std::sqrt(static_cast<T>(dh));
  auto probs = std::make_shared<std::vector<T>>(batch * heads * lq * lk);
  std::vector<T> y(batch * lq * d);
  const T* qv = q.data().data();
  const T* kv = k.data().data();
  const T* vv = v.data().data();

  parallel_for(batch * heads, 4, [&](std::size_t begin, std::size_t end) {
    std::vector<T> kt(dh * lk);
    std::vector<T> scores(lq * lk);
    for (std::size_t task = begin; task < end; ++task) {
      const std::size_t b = task / heads;
      const std::size_t h = task % heads;
      const T* qh = qv + b * lq * d + h * dh;
      const T* kh = kv + b * lk * d + h * dh;
      const T* vh = vv + b * lk * d + h * dh;
      T* p = probs->data() + task * lq * lk;
      kernels::transpose(lk, dh, kh, d, kt.data(), lk);
      kernels::gemm(lq, lk, dh, qh, d, kt.data(), lk, scores.data(), lk, false);
      for (auto& s : scores) s *= scale_factor;
      for (std::size_t i = 0; i < lq; ++i) softmax_row(scores.data() + i * lk, p + i * lk, lk);
      kernels::gemm(lq, dh, lk, p, lk, vh, d, y.data() + b * lq * d + h * dh, d, false);
    }
  });
  if (probs_out) *probs_out = *probs;

  return detail::make_result<T>(qs, std::move(y), {q.node(), k.node(), v.node()},
                                [batch, heads, lq, lk, d, dh, scale_factor, probs](NodeT<T>& self) {
    auto& pq = self.parents[0];
    auto& pk = self.parents[1];
    auto& pv = self.parents[2];
    T* dq = pq->requires_grad ? pq->grad_buffer().data() : nullptr;
    T* dk = pk->requires_grad ? pk->grad_buffer().data() : nullptr;
    T* dv = pv->requires_grad ? pv->grad_buffer().data() : nullptr;
    const T* dy = self.grad.data();
    parallel_for(batch * heads, 4, [&](std::size_t begin, std::size_t end) {
      std::vector<T> vt(dh * lk);
      std::vector<T> dp(lq * lk);
      std::vector<T> ds(lq * lk);
      std::vector<T> tmp(lk * lq);
      for (std::size_t task = begin; task < end; ++task) {
        const std::size_t b = task / heads;
        const std::size_t h = task % heads;
        const std::size_t q_off = b * lq * d + h * dh;
        const std::size_t k_off = b * lk * d + h * dh;
        const T* p = probs->data() + task * lq * lk;
        const T* dyh = dy + q_off;
        kernels::transpose(lk, dh, pv->value.data() + k_off, d, vt.data(), lk);
        kernels::gemm(lq, lk, dh, dyh, d, vt.data(), lk, dp.data(), lk, false);
        std::fill(ds.begin(), ds.end(), T{0});
        for (std::size_t i = 0; i < lq; ++i) {
          softmax_row_backward(p + i * lk, dp.data() + i * lk, ds.data() + i * lk, lk, scale_factor);
        }
        if (dq) kernels::gemm(lq, dh, lk, ds.data(), lk, pk->value.data() + k_off, d, dq + q_off, d, true);
        if (dk) {
          kernels::transpose(lq, lk, ds.data(), lk, tmp.data(), lq);
          kernels::gemm(lk, dh, lq, tmp.data(), lq, pq->value.data() + q_off, d, dk + k_off, d, true);
        }
        if (dv) {
          kernels::transpose(lq, lk, p, lk, tmp.data(), lq);
          kernels::gemm(lk, dh, lq, tmp.data(), lq, dyh, d, dv + k_off, d, true);
        }
      }
    });
  });
}

// ---------------------------------------------------------------------------

#define CMAE_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> transpose(const Tensor<T>&, int, int);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> concat(std::span<const Tensor<T>>, int);                                    \
  template Tensor<T> stack(std::span<const Tensor<T>>);                                          \
  template Tensor<T> select(const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> expand(const Tensor<T>&, const Shape&);                                     \
  template Tensor<T> gather_rows(const Tensor<T>&, const TokenIndex&);                           \
  template Tensor<T> embedding(const Tensor<T>&, const TokenIndex&);                             \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> mean_axis(const Tensor<T>&, int);                                           \
  template Tensor<T> var_lastdim(const Tensor<T>&);                                              \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                      \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                               std::vector<T>*);

CMAE_INSTANTIATE_OPS(float)
CMAE_INSTANTIATE_OPS(double)

#undef CMAE_INSTANTIATE_OPS

}  // namespace cmae
