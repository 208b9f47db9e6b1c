// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "cmae/kernels.hpp"
#include "cmae/rng.hpp"

namespace {

std::vector<float> filled(std::size_t n, std::uint64_t seed) {
  cmae::CounterRng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform() - 0.5);
  return v;
}

void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto a = filled(m * k, 1);
  const auto b = filled(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    cmae::kernels::gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * static_cast<double>(m * n * k),
                                                 benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}
// Shapes from the desk-scale model: token rows x widths.
BENCHMARK(BM_Gemm)
    ->Args({256, 64, 64})
    ->Args({4352, 64, 64})
    ->Args({4352, 256, 64})
    ->Args({4352, 64, 256})
    ->Args({65, 65, 16})
    ->Args({48, 17, 8})
    ->Args({512, 512, 512});

void BM_Transpose(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n * n, 3);
  std::vector<float> t(n * n);
  for (auto _ : state) {
    cmae::kernels::transpose(n, n, a.data(), n, t.data(), n);
    benchmark::DoNotOptimize(t.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * n * n * sizeof(float) * 2));
}
BENCHMARK(BM_Transpose)->Arg(64)->Arg(256)->Arg(1024);

}  // namespace
