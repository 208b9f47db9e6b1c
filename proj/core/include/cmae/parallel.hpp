// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace cmae {

/// Worker count used by parallel_for. 1 runs everything inline.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs fn(begin, end) over disjoint chunks of [0, n). Chunk boundaries only
/// affect scheduling: callers write disjoint outputs, so results do not
/// depend on the thread count.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace cmae
