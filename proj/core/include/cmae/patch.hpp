// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cmae {

struct ImageGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
};

/// HWC image -> [(H/p)*(W/p), p*p*C]. Patches are numbered row-major over
/// the grid; inside a patch values run (row, col, channel).
template <typename T>
std::vector<T> patchify(std::span<const T> image, const ImageGeometry& geom, std::size_t patch);

template <typename T>
std::vector<T> unpatchify(std::span<const T> patches, const ImageGeometry& geom, std::size_t patch);

/// Fixed 2-D sin/cos table [grid_h * grid_w, dim]. The first dim/2 channels
/// encode the row, the rest the column; each half is dim/4 sines followed by
/// dim/4 cosines at geometric frequencies 1 / 10000^(i / (dim/4)).
std::vector<double> pos_embed_2d(std::size_t grid_h, std::size_t grid_w, std::size_t dim);

}  // namespace cmae
