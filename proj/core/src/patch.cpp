// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/patch.hpp"

#include <cmath>
#include <string>

#include "cmae/errors.hpp"

namespace cmae {

namespace {

void check_geometry(const ImageGeometry& g, std::size_t patch, std::size_t values) {
  if (patch == 0 || g.height % patch != 0 || g.width % patch != 0) {
    throw ConfigError("patchify: " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
  if (values != g.height * g.width * g.channels) {
    throw ConfigError("patchify: buffer of " + std::to_string(values) + " values does not match " +
                      std::to_string(g.height) + "x" + std::to_string(g.width) + "x" + std::to_string(g.channels));
  }
}

// Calls fn(image_offset, patch_offset) for every scalar.
template <typename Fn>
void for_each_patch_value(const ImageGeometry& g, std::size_t patch, Fn&& fn) {
  const std::size_t gw = g.width / patch;
  const std::size_t gh = g.height / patch;
  const std::size_t pdim = patch * patch * g.channels;
  for (std::size_t pr = 0; pr < gh; ++pr) {
    for (std::size_t pc = 0; pc < gw; ++pc) {
      const std::size_t base = (pr * gw + pc) * pdim;
      for (std::size_t y = 0; y < patch; ++y) {
        for (std::size_t x = 0; x < patch; ++x) {
          const std::size_t img = ((pr * patch + y) * g.width + pc * patch + x) * g.channels;
          const std::size_t dst = base + (y * patch + x) * g.channels;
          for (std::size_t c = 0; c < g.channels; ++c) fn(img + c, dst + c);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
std::vector<T> patchify(std::span<const T> image, const ImageGeometry& geom, std::size_t patch) {
  check_geometry(geom, patch, image.size());
  std::vector<T> out(image.size());
  for_each_patch_value(geom, patch, [&](std::size_t img, std::size_t dst) { out[dst] = image[img]; });
  return out;
}

template <typename T>
std::vector<T> unpatchify(std::span<const T> patches, const ImageGeometry& geom, std::size_t patch) {
  check_geometry(geom, patch, patches.size());
  std::vector<T> out(patches.size());
  for_each_patch_value(geom, patch, [&](std::size_t img, std::size_t src) { out[img] = patches[src]; });
  return out;
}

template std::vector<float> patchify(std::span<const float>, const ImageGeometry&, std::size_t);
template std::vector<double> patchify(std::span<const double>, const ImageGeometry&, std::size_t);
template std::vector<float> unpatchify(std::span<const float>, const ImageGeometry&, std::size_t);
template std::vector<double> unpatchify(std::span<const double>, const ImageGeometry&, std::size_t);

std::vector<double> pos_embed_2d(std::size_t grid_h, std::size_t grid_w, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) {
    throw ConfigError("pos_embed_2d: dim must be a positive multiple of 4, got " + std::to_string(dim));
  }
  const std::size_t quarter = dim / 4;
  std::vector<double> omega(quarter);
  for (std::size_t i = 0; i < quarter; ++i) {
    omega[i] = 1.0 / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(quarter));
  }
  std::vector<double> table(grid_h * grid_w * dim);
  for (std::size_t r = 0; r < grid_h; ++r) {
    for (std::size_t c = 0; c < grid_w; ++c) {
      double* row = table.data() + (r * grid_w + c) * dim;
      for (std::size_t i = 0; i < quarter; ++i) {
        row[i] = std::sin(static_cast<double>(r) * omega[i]);
        row[quarter + i] = std::cos(static_cast<double>(r) * omega[i]);
        row[2 * quarter + i] = std::sin(static_cast<double>(c) * omega[i]);
        row[3 * quarter + i] = std::cos(static_cast<double>(c) * omega[i]);
      }
    }
  }
  return table;
}

}  // namespace cmae
