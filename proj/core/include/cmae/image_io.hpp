// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cmae {

/// Value in [0, 1] to a byte: clamp, then floor(v * 255 + 0.5).
std::uint8_t quantize_unit(double v);

/// Writes an [H, W, C] image as binary PPM (P6, maxval 255). C may be 3, or
/// 1 for grayscale (replicated into all three channels).
void write_ppm(const std::filesystem::path& path, std::span<const float> image, std::size_t height,
               std::size_t width, std::size_t channels);

/// Places equally sized [H, W, C] images side by side with `gap` pixels of
/// white between them.
std::vector<float> tile_horizontal(std::span<const std::vector<float>> images, std::size_t height,
                                   std::size_t width, std::size_t channels, std::size_t gap = 1);

/// Nearest-neighbour upscale by an integer factor.
std::vector<float> upscale(std::span<const float> image, std::size_t height, std::size_t width,
                           std::size_t channels, std::size_t factor);

}  // namespace cmae
