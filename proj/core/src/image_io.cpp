// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "cmae/errors.hpp"

namespace cmae {

std::uint8_t quantize_unit(double v) {
  if (std::isnan(v)) return 0;
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

void write_ppm(const std::filesystem::path& path, std::span<const float> image, std::size_t height,
               std::size_t width, std::size_t channels) {
  if (channels != 1 && channels != 3) throw ConfigError("write_ppm: channels must be 1 or 3");
  if (image.size() != height * width * channels) throw ConfigError("write_ppm: buffer does not match geometry");
  std::vector<std::uint8_t> payload(height * width * 3);
  for (std::size_t p = 0; p < height * width; ++p) {
    for (std::size_t c = 0; c < 3; ++c) payload[p * 3 + c] = quantize_unit(image[p * channels + (channels == 3 ? c : 0)]);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os << "P6\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!os) throw DataError("write to '" + path.string() + "' failed");
}

std::vector<float> tile_horizontal(std::span<const std::vector<float>> images, std::size_t height,
                                   std::size_t width, std::size_t channels, std::size_t gap) {
  const std::size_t n = images.size();
  if (n == 0) return {};
  const std::size_t out_w = n * width + (n - 1) * gap;
  std::vector<float> out(height * out_w * channels, 1.0f);
  for (std::size_t i = 0; i < n; ++i) {
    if (images[i].size() != height * width * channels) throw ConfigError("tile_horizontal: image size mismatch");
    const std::size_t x0 = i * (width + gap);
    for (std::size_t y = 0; y < height; ++y) {
      std::copy_n(images[i].begin() + static_cast<std::ptrdiff_t>(y * width * channels), width * channels,
                  out.begin() + static_cast<std::ptrdiff_t>((y * out_w + x0) * channels));
    }
  }
  return out;
}

std::vector<float> upscale(std::span<const float> image, std::size_t height, std::size_t width,
                           std::size_t channels, std::size_t factor) {
  if (image.size() != height * width * channels || factor == 0) throw ConfigError("upscale: bad geometry");
  const std::size_t ow = width * factor;
  std::vector<float> out(height * factor * ow * channels);
  for (std::size_t y = 0; y < height * factor; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        out[(y * ow + x) * channels + c] = image[((y / factor) * width + x / factor) * channels + c];
      }
    }
  }
  return out;
}

}  // namespace cmae
