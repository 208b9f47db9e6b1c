// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "cmae/checkpoint.hpp"
#include "cmae/dataset.hpp"
#include "cmae/errors.hpp"
#include "cmae/image_io.hpp"

namespace cmae {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cmae_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static std::vector<char> bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  }
  static void write_bytes(const fs::path& p, const std::vector<char>& b) {
    std::ofstream os(p, std::ios::binary);
    os.write(b.data(), static_cast<std::streamsize>(b.size()));
  }

  fs::path dir_;
};

using DatasetFiles = TempDir;

TEST_F(DatasetFiles, SameSeedGivesIdenticalFiles) {
  save_dataset(dir_ / "a.bin", gen_synthetic(20, 16, 16, 5, true));
  save_dataset(dir_ / "b.bin", gen_synthetic(20, 16, 16, 5, true));
  save_dataset(dir_ / "c.bin", gen_synthetic(20, 16, 16, 6, true));
  EXPECT_EQ(bytes(dir_ / "a.bin"), bytes(dir_ / "b.bin"));
  EXPECT_NE(bytes(dir_ / "a.bin"), bytes(dir_ / "c.bin"));
}

TEST_F(DatasetFiles, EmptyDatasetHasHeaderOnly) {
  save_dataset(dir_ / "e.bin", gen_synthetic(0, 8, 8, 1, false));
  EXPECT_EQ(fs::file_size(dir_ / "e.bin"), 4u + 5 * 4 + 1);
  const Dataset d = load_dataset(dir_ / "e.bin");
  EXPECT_EQ(d.size(), 0u);
  EXPECT_EQ(d.height, 8u);
}

TEST_F(DatasetFiles, RoundTripIsExact) {
  const Dataset d = gen_synthetic(12, 8, 12, 3, true);
  save_dataset(dir_ / "d.bin", d);
  const Dataset back = load_dataset(dir_ / "d.bin");
  EXPECT_EQ(back.pixels, d.pixels);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.height, 8u);
  EXPECT_EQ(back.width, 12u);
  EXPECT_TRUE(back.labeled);
  EXPECT_EQ(dataset_fingerprint(back), dataset_fingerprint(d));
}

TEST_F(DatasetFiles, HeaderFieldsAreLittleEndian) {
  save_dataset(dir_ / "h.bin", gen_synthetic(3, 8, 4, 1, false, 1));
  const auto b = bytes(dir_ / "h.bin");
  ASSERT_GE(b.size(), 25u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "CMAE");
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
  };
  EXPECT_EQ(u32(4), kDatasetVersion);
  EXPECT_EQ(u32(8), 3u);
  EXPECT_EQ(u32(12), 8u);
  EXPECT_EQ(u32(16), 4u);
  EXPECT_EQ(u32(20), 1u);
  EXPECT_EQ(b[24], 0);
  EXPECT_EQ(b.size(), 25u + 3 * 8 * 4);
}

TEST_F(DatasetFiles, CorruptFilesReportOffsets) {
  save_dataset(dir_ / "ok.bin", gen_synthetic(4, 8, 8, 1, true));
  auto b = bytes(dir_ / "ok.bin");

  auto bad_magic = b;
  bad_magic[0] = 'X';
  write_bytes(dir_ / "magic.bin", bad_magic);
  try {
    load_dataset(dir_ / "magic.bin");
    FAIL() << "bad magic accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }

  auto short_file = b;
  short_file.resize(b.size() - 3);
  write_bytes(dir_ / "short.bin", short_file);
  EXPECT_THROW(load_dataset(dir_ / "short.bin"), DataError);

  write_bytes(dir_ / "tiny.bin", std::vector<char>(b.begin(), b.begin() + 10));
  EXPECT_THROW(load_dataset(dir_ / "tiny.bin"), DataError);

  auto trailing = b;
  trailing.push_back(0);
  write_bytes(dir_ / "trailing.bin", trailing);
  EXPECT_THROW(load_dataset(dir_ / "trailing.bin"), DataError);

  EXPECT_THROW(load_dataset(dir_ / "missing.bin"), DataError);
}

TEST_F(DatasetFiles, RawDirectoryImport) {
  fs::create_directories(dir_ / "raw");
  std::vector<char> a(2 * 2 * 3, 7), c(2 * 2 * 3, 9);
  write_bytes(dir_ / "raw" / "b.raw", c);
  write_bytes(dir_ / "raw" / "a.raw", a);
  const Dataset d = load_raw_directory(dir_ / "raw", 2, 2, 3);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.image(0)[0], 7);
  EXPECT_EQ(d.image(1)[0], 9);
  write_bytes(dir_ / "raw" / "c.raw", std::vector<char>(5, 0));
  EXPECT_THROW(load_raw_directory(dir_ / "raw", 2, 2, 3), DataError);
}

TEST(Synthetic, LabelHistogramIsUniform) {
  const Dataset d = gen_synthetic(10000, 16, 16, 77, true);
  std::array<std::size_t, kNumShapeClasses> hist{};
  for (auto l : d.labels) {
    ASSERT_LT(l, kNumShapeClasses);
    ++hist[l];
  }
  for (std::size_t h : hist) EXPECT_NEAR(static_cast<double>(h), 2500.0, 0.05 * 2500.0);
}

TEST(Synthetic, ImagesAreNotFlat) {
  const Dataset d = gen_synthetic(8, 32, 32, 2, false);
  EXPECT_FALSE(d.labeled);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto img = d.image(i);
    const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
    EXPECT_GT(*hi - *lo, 32);
  }
}

TEST(Synthetic, SliceKeepsLabels) {
  const Dataset d = gen_synthetic(10, 8, 8, 3, true);
  const Dataset s = d.slice(4, 3);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_TRUE(std::equal(s.image(0).begin(), s.image(0).end(), d.image(4).begin()));
  EXPECT_EQ(s.labels[2], d.labels[6]);
}

TEST(Loader, EpochOrderIsAPermutation) {
  const Dataset d = gen_synthetic(37, 8, 8, 1, true);
  const DataLoader loader(d, {.batch_size = 8, .shuffle = true, .seed = 4});
  auto order = loader.epoch_order(0);
  std::vector<std::size_t> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(order, loader.epoch_order(1));
  EXPECT_EQ(loader.batches_per_epoch(), 4u);
}

TEST(Loader, OrderAndBatchesArePureFunctions) {
  const Dataset d = gen_synthetic(40, 8, 8, 1, true);
  const LoaderConfig cfg{.batch_size = 8, .shuffle = true, .seed = 9, .flip = true, .crop_pad = 2};
  const DataLoader a(d, cfg);
  const DataLoader b(d, cfg);
  for (std::size_t epoch = 0; epoch < 2; ++epoch) {
    EXPECT_EQ(a.epoch_order(epoch), b.epoch_order(epoch));
    for (std::size_t i = 0; i < a.batches_per_epoch(); ++i) {
      const Batch x = a.batch(epoch, i);
      const Batch y = b.batch(epoch, i);
      EXPECT_EQ(x.indices, y.indices);
      EXPECT_EQ(x.images, y.images);
      EXPECT_EQ(x.labels, y.labels);
      const Batch z = a.batch(a.epoch_order(epoch), epoch, i);
      EXPECT_EQ(x.images, z.images);
    }
  }
}

TEST(Loader, OutputsStayInUnitRange) {
  const Dataset d = gen_synthetic(16, 8, 8, 1, false);
  const DataLoader loader(d, {.batch_size = 16, .seed = 1, .flip = true, .crop_pad = 3});
  const Batch b = loader.batch(0, 0);
  EXPECT_EQ(b.count, 16u);
  EXPECT_EQ(b.images.size(), 16u * 8 * 8 * 3);
  for (float v : b.images) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Loader, UnshuffledUnaugmentedMatchesPixels) {
  const Dataset d = gen_synthetic(6, 4, 4, 1, true);
  const DataLoader loader(d, {.batch_size = 4, .shuffle = false, .drop_last = false});
  EXPECT_EQ(loader.batches_per_epoch(), 2u);
  const Batch last = loader.batch(0, 1);
  EXPECT_EQ(last.count, 2u);
  EXPECT_EQ(last.indices, (std::vector<std::size_t>{4, 5}));
  for (std::size_t k = 0; k < d.image_size(); ++k) {
    EXPECT_EQ(last.images[k], static_cast<float>(d.image(4)[k]) / 255.0f);
  }
  EXPECT_EQ(to_float_images(d, 4, 1), std::vector<float>(last.images.begin(), last.images.begin() + 48));
}

TEST(Ppm, QuantizationRule) {
  EXPECT_EQ(quantize_unit(0.0), 0);
  EXPECT_EQ(quantize_unit(1.0), 255);
  EXPECT_EQ(quantize_unit(0.5), 128);
  EXPECT_EQ(quantize_unit(-0.2), 0);
  EXPECT_EQ(quantize_unit(1.3), 255);
  EXPECT_EQ(quantize_unit(254.5 / 255.0), 255);
}

using PpmFiles = TempDir;

TEST_F(PpmFiles, AllZeroPayload) {
  write_ppm(dir_ / "z.ppm", std::vector<float>(3 * 2 * 3, 0.0f), 3, 2, 3);
  const auto b = bytes(dir_ / "z.ppm");
  const std::string header = "P6\n2 3\n255\n";
  ASSERT_EQ(b.size(), header.size() + 18);
  EXPECT_EQ(std::string(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(header.size())), header);
  for (std::size_t i = header.size(); i < b.size(); ++i) EXPECT_EQ(b[i], 0);
}

TEST_F(PpmFiles, GrayscaleIsReplicatedAndClamped) {
  write_ppm(dir_ / "g.ppm", std::vector<float>{-0.2f, 1.3f}, 1, 2, 1);
  const auto b = bytes(dir_ / "g.ppm");
  const std::vector<unsigned char> payload(b.end() - 6, b.end());
  EXPECT_EQ(payload, (std::vector<unsigned char>{0, 0, 0, 255, 255, 255}));
  EXPECT_THROW(write_ppm(dir_ / "no_such_dir" / "x.ppm", std::vector<float>(3, 0.0f), 1, 1, 3), DataError);
}

TEST(Panels, TileAndUpscale) {
  const std::vector<std::vector<float>> imgs = {{0.1f}, {0.2f}};
  const auto tiled = tile_horizontal(imgs, 1, 1, 1, 1);
  EXPECT_EQ(tiled, (std::vector<float>{0.1f, 1.0f, 0.2f}));
  const auto up = upscale(std::vector<float>{0.1f, 0.2f}, 1, 2, 1, 2);
  EXPECT_EQ(up, (std::vector<float>{0.1f, 0.1f, 0.2f, 0.2f, 0.1f, 0.1f, 0.2f, 0.2f}));
}

using CheckpointFiles = TempDir;

TEST_F(CheckpointFiles, RoundTripIsExact) {
  const std::vector<NamedArray> records = {
      {"encoder.w", {2, 3}, {1.5f, -2.0f, 3.25f, 0.0f, 1e-7f, -1e30f}},
      {"decoder.b", {4}, {0.1f, 0.2f, 0.3f, 0.4f}},
      {"scalar", {}, {42.0f}},
  };
  save_checkpoint(dir_ / "c.cmae", records);
  const auto back = load_checkpoint(dir_ / "c.cmae");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(back[i].name, records[i].name);
    EXPECT_EQ(back[i].shape, records[i].shape);
    EXPECT_EQ(back[i].values, records[i].values);
  }
}

TEST_F(CheckpointFiles, CorruptionIsRejected) {
  save_checkpoint(dir_ / "c.cmae", std::vector<NamedArray>{{"w", {2}, {1.0f, 2.0f}}});
  auto b = bytes(dir_ / "c.cmae");
  auto truncated = b;
  truncated.resize(b.size() - 2);
  write_bytes(dir_ / "t.cmae", truncated);
  EXPECT_THROW(load_checkpoint(dir_ / "t.cmae"), DataError);
  auto bad = b;
  bad[0] = 'x';
  write_bytes(dir_ / "m.cmae", bad);
  EXPECT_THROW(load_checkpoint(dir_ / "m.cmae"), DataError);
}

}  // namespace
}  // namespace cmae
