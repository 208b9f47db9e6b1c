// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter checkpoints.
//
// Layout (all integers little-endian u32):
//   "CMAEckpt" | version | { name_len | name | rank | extents[rank] | f32 values }*
// Records run to end of file.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmae/tensor.hpp"

namespace cmae {

inline constexpr char kCheckpointMagic[8] = {'C', 'M', 'A', 'E', 'c', 'k', 'p', 't'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> records);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

}  // namespace cmae
