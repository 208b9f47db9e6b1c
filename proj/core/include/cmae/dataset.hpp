// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0
//
// Image datasets: seeded synthetic shapes, a small binary container, a raw
// directory importer and a deterministic batch loader.
//
// File layout (integers little-endian):
//   "CMAE"  u32 version  u32 count  u32 height  u32 width  u32 channels
//   u8 labels_present
//   count*height*width*channels u8 pixels (HWC, image after image)
//   count u8 labels, when present

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cmae {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr int kNumShapeClasses = 4;

struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  bool labeled = false;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t image_size() const { return height * width * channels; }
  std::size_t size() const { return image_size() == 0 ? 0 : pixels.size() / image_size(); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return std::span<const std::uint8_t>(pixels).subspan(i * image_size(), image_size());
  }
  /// Images [first, first + count) as a new dataset.
  Dataset slice(std::size_t first, std::size_t count) const;
};

/// Each image holds 2-5 anti-aliased shapes (rectangle, disc, triangle,
/// striped square) over a linear colour gradient. The first shape drawn is
/// the largest; with `labeled`, its class (0 rectangle, 1 disc, 2 triangle,
/// 3 stripes) is drawn uniformly and stored as the label.
Dataset gen_synthetic(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed, bool labeled,
                      std::size_t channels = 3);

void save_dataset(const std::filesystem::path& path, const Dataset& data);
/// Throws DataError with the byte offset of the first problem.
Dataset load_dataset(const std::filesystem::path& path);

/// Every regular file in `dir` (sorted by name) must hold exactly
/// height*width*channels raw bytes.
Dataset load_raw_directory(const std::filesystem::path& dir, std::size_t height, std::size_t width,
                           std::size_t channels);

/// FNV-1a over the serialized file contents, for run manifests.
std::uint64_t dataset_fingerprint(const Dataset& data);

struct LoaderConfig {
  std::size_t batch_size = 64;
  bool shuffle = true;
  std::uint64_t seed = 0;
  bool flip = false;
  /// Pad-and-crop: edge-replicate by `crop_pad` pixels, then cut a random
  /// window of the original size. 0 disables.
  std::size_t crop_pad = 0;
  bool drop_last = true;
};

struct Batch {
  std::size_t count = 0;
  std::vector<std::size_t> indices;
  /// HWC floats in [0, 1], image after image.
  std::vector<float> images;
  std::vector<int> labels;
};

/// Batches are a pure function of (dataset, config, epoch, batch index).
class DataLoader {
 public:
  DataLoader(const Dataset& data, const LoaderConfig& config);

  std::size_t batches_per_epoch() const;
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  Batch batch(std::size_t epoch, std::size_t index) const;
  /// Variant that reuses a precomputed epoch order.
  Batch batch(std::span<const std::size_t> order, std::size_t epoch, std::size_t index) const;

 private:
  const Dataset* data_;
  LoaderConfig config_;
};

/// u8 pixels to [0, 1] floats.
std::vector<float> to_float_images(const Dataset& data, std::size_t first, std::size_t count);

}  // namespace cmae
