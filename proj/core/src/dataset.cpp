// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>

#include "cmae/errors.hpp"
#include "cmae/rng.hpp"

namespace cmae {

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw ConfigError("dataset slice out of range");
  Dataset out;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.labeled = labeled;
  const auto begin = pixels.begin() + static_cast<std::ptrdiff_t>(first * image_size());
  out.pixels.assign(begin, begin + static_cast<std::ptrdiff_t>(count * image_size()));
  if (labeled) {
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                      labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  }
  return out;
}

namespace {

constexpr int kSuper = 3;  // supersamples per pixel axis

struct Shape2d {
  int kind = 0;
  double cx = 0, cy = 0;
  double size = 0;  // half-extent (rectangle uses size and aspect)
  double aspect = 1;
  double angle = 0;
  double period = 0;
  std::array<double, 3> color{};
  std::array<double, 3> color2{};

  // Colour at a covered point, or nullptr when the point is outside.
  const std::array<double, 3>* sample(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    switch (kind) {
      case 0:
        return std::abs(u) <= size * aspect && std::abs(v) <= size / aspect ? &color : nullptr;
      case 1:
        return dx * dx + dy * dy <= size * size ? &color : nullptr;
      case 2: {
        // Equilateral triangle with circumradius `size`: inside all three
        // half-planes at distance size/2 from the centre.
        for (int k = 0; k < 3; ++k) {
          const double a = angle + 2.0 * std::numbers::pi * k / 3.0;
          if (std::cos(a) * dx + std::sin(a) * dy > size * 0.5) return nullptr;
        }
        return &color;
      }
      default: {
        if (std::abs(u) > size || std::abs(v) > size) return nullptr;
        const auto band = static_cast<long>(std::floor((u + size) / period));
        return band % 2 == 0 ? &color : &color2;
      }
    }
  }
};

// Half-extent giving the requested area (in unit-square coordinates).
double size_for_area(int kind, double area) {
  switch (kind) {
    case 0:
    case 3:
      return std::sqrt(area / 4.0);
    case 1:
      return std::sqrt(area / std::numbers::pi);
    default:
      return std::sqrt(area * 4.0 / (3.0 * std::sqrt(3.0)));
  }
}

Shape2d random_shape(CounterRng& rng, int kind, double area) {
  Shape2d s;
  s.kind = kind;
  s.size = size_for_area(kind, area);
  s.aspect = kind == 0 ? std::sqrt(0.6 + 0.8 * rng.uniform()) : 1.0;
  s.angle = rng.uniform() * std::numbers::pi;
  s.cx = 0.2 + 0.6 * rng.uniform();
  s.cy = 0.2 + 0.6 * rng.uniform();
  s.period = s.size * (0.25 + 0.2 * rng.uniform());
  for (auto& c : s.color) c = rng.uniform();
  for (auto& c : s.color2) c = rng.uniform();
  return s;
}

void render(std::span<std::uint8_t> out, std::size_t h, std::size_t w, std::size_t channels, CounterRng& rng,
            const std::vector<Shape2d>& shapes) {
  std::array<double, 3> bg0{};
  std::array<double, 3> bg1{};
  for (auto& c : bg0) c = rng.uniform();
  for (auto& c : bg1) c = rng.uniform();
  const double ga = rng.uniform() * 2.0 * std::numbers::pi;
  const double gx = std::cos(ga);
  const double gy = std::sin(ga);

  std::array<double, 3> acc{};
  for (std::size_t py = 0; py < h; ++py) {
    for (std::size_t px = 0; px < w; ++px) {
      acc.fill(0.0);
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double x = (static_cast<double>(px) + (sx + 0.5) / kSuper) / static_cast<double>(w);
          const double y = (static_cast<double>(py) + (sy + 0.5) / kSuper) / static_cast<double>(h);
          const double t = std::clamp(0.5 + 0.7 * ((x - 0.5) * gx + (y - 0.5) * gy), 0.0, 1.0);
          std::array<double, 3> col{};
          for (int c = 0; c < 3; ++c) col[c] = bg0[c] * (1.0 - t) + bg1[c] * t;
          for (const auto& s : shapes) {
            if (const auto* sc = s.sample(x, y)) col = *sc;
          }
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
        }
      }
      for (std::size_t c = 0; c < channels; ++c) {
        double v = 0.0;
        if (channels == 3) {
          v = acc[c];
        } else {
          v = 0.299 * acc[0] + 0.587 * acc[1] + 0.114 * acc[2];
        }
        v /= kSuper * kSuper;
        out[(py * w + px) * channels + c] = static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255 + 0.5));
      }
    }
  }
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw ConfigError(std::string("dataset: ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::vector<std::uint8_t> serialize(const Dataset& d) {
  std::ostringstream os;
  os.write("CMAE", 4);
  put_u32(os, kDatasetVersion);
  put_u32(os, to_u32(d.size(), "count"));
  put_u32(os, to_u32(d.height, "height"));
  put_u32(os, to_u32(d.width, "width"));
  put_u32(os, to_u32(d.channels, "channels"));
  os.put(d.labeled ? 1 : 0);
  const std::string header = os.str();
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), d.pixels.begin(), d.pixels.end());
  if (d.labeled) out.insert(out.end(), d.labels.begin(), d.labels.end());
  return out;
}

}  // namespace

Dataset gen_synthetic(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed, bool labeled,
                      std::size_t channels) {
  if (height == 0 || width == 0) throw ConfigError("gen_synthetic: image size must be positive");
  if (channels != 1 && channels != 3) throw ConfigError("gen_synthetic: channels must be 1 or 3");
  Dataset d;
  d.height = height;
  d.width = width;
  d.channels = channels;
  d.labeled = labeled;
  d.pixels.resize(count * d.image_size());
  if (labeled) d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(derive_seed({seed, i}));
    const int dominant = static_cast<int>(rng.below(kNumShapeClasses));
    const std::size_t extra = 1 + rng.below(4);
    std::vector<Shape2d> shapes;
    shapes.push_back(random_shape(rng, dominant, 0.16 + 0.12 * rng.uniform()));
    for (std::size_t k = 0; k < extra; ++k) {
      const int kind = static_cast<int>(rng.below(kNumShapeClasses));
      shapes.push_back(random_shape(rng, kind, 0.02 + 0.04 * rng.uniform()));
    }
    render(std::span<std::uint8_t>(d.pixels).subspan(i * d.image_size(), d.image_size()), height, width, channels,
           rng, shapes);
    if (labeled) d.labels[i] = static_cast<std::uint8_t>(dominant);
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  if (data.labeled && data.labels.size() != data.size()) throw ConfigError("save_dataset: label count mismatch");
  const auto bytes = serialize(data);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("write to '" + path.string() + "' failed");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open dataset '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = "dataset '" + path.string() + "'";
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n) {
      throw DataError(where + ": truncated " + what + " at byte offset " + std::to_string(pos) + " (file has " +
                      std::to_string(bytes.size()) + " bytes)");
    }
  };
  auto u32 = [&](const char* what) {
    need(4, what);
    const std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) | static_cast<std::uint32_t>(bytes[pos + 1]) << 8 |
                            static_cast<std::uint32_t>(bytes[pos + 2]) << 16 |
                            static_cast<std::uint32_t>(bytes[pos + 3]) << 24;
    pos += 4;
    return v;
  };
  need(4, "magic");
  if (!std::equal(bytes.begin(), bytes.begin() + 4, "CMAE")) {
    throw DataError(where + ": bad magic at byte offset 0");
  }
  pos = 4;
  const std::size_t version_at = pos;
  if (u32("version") != kDatasetVersion) {
    throw DataError(where + ": unsupported version at byte offset " + std::to_string(version_at));
  }
  Dataset d;
  const std::size_t count = u32("count");
  d.height = u32("height");
  d.width = u32("width");
  d.channels = u32("channels");
  need(1, "label flag");
  if (bytes[pos] > 1) throw DataError(where + ": label flag must be 0 or 1 at byte offset " + std::to_string(pos));
  d.labeled = bytes[pos++] == 1;
  const std::size_t pixel_bytes = count * d.image_size();
  need(pixel_bytes, "pixel payload");
  d.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + pixel_bytes));
  pos += pixel_bytes;
  if (d.labeled) {
    need(count, "labels");
    d.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
    pos += count;
  }
  if (pos != bytes.size()) {
    throw DataError(where + ": " + std::to_string(bytes.size() - pos) + " trailing bytes at byte offset " +
                    std::to_string(pos));
  }
  return d;
}

Dataset load_raw_directory(const std::filesystem::path& dir, std::size_t height, std::size_t width,
                           std::size_t channels) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Dataset d;
  d.height = height;
  d.width = width;
  d.channels = channels;
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() != d.image_size()) {
      throw DataError("'" + f.string() + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(d.image_size()) + " (error at byte offset " +
                      std::to_string(std::min(bytes.size(), d.image_size())) + ")");
    }
    d.pixels.insert(d.pixels.end(), bytes.begin(), bytes.end());
  }
  return d;
}

std::uint64_t dataset_fingerprint(const Dataset& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : serialize(data)) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

DataLoader::DataLoader(const Dataset& data, const LoaderConfig& config) : data_(&data), config_(config) {
  if (config_.batch_size == 0) throw ConfigError("loader: batch size must be positive");
  if (config_.crop_pad >= data.height || config_.crop_pad >= data.width) {
    if (config_.crop_pad != 0) throw ConfigError("loader: crop padding must be smaller than the image");
  }
}

std::size_t DataLoader::batches_per_epoch() const {
  const std::size_t n = data_->size();
  return config_.drop_last ? n / config_.batch_size : (n + config_.batch_size - 1) / config_.batch_size;
}

std::vector<std::size_t> DataLoader::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(data_->size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (config_.shuffle) {
    CounterRng rng(derive_seed({config_.seed, 0x73687566ull, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

Batch DataLoader::batch(std::size_t epoch, std::size_t index) const { return batch(epoch_order(epoch), epoch, index); }

Batch DataLoader::batch(std::span<const std::size_t> order, std::size_t epoch, std::size_t index) const {
  const std::size_t first = index * config_.batch_size;
  if (first >= order.size()) throw ConfigError("loader: batch index out of range");
  const std::size_t count = std::min(config_.batch_size, order.size() - first);
  const std::size_t h = data_->height;
  const std::size_t w = data_->width;
  const std::size_t c = data_->channels;
  const std::size_t pad = config_.crop_pad;
  Batch out;
  out.count = count;
  out.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(first),
                     order.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.images.resize(count * data_->image_size());
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t idx = out.indices[b];
    const auto src = data_->image(idx);
    CounterRng rng(derive_seed({config_.seed, 0x61756775ull, epoch, idx}));
    const bool flip = config_.flip && rng.below(2) == 1;
    const std::size_t oy = pad ? rng.below(2 * pad + 1) : pad;
    const std::size_t ox = pad ? rng.below(2 * pad + 1) : pad;
    float* dst = out.images.data() + b * data_->image_size();
    for (std::size_t y = 0; y < h; ++y) {
      const auto sy = static_cast<std::size_t>(
          std::clamp<long>(static_cast<long>(y + oy) - static_cast<long>(pad), 0, static_cast<long>(h) - 1));
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t xx = flip ? w - 1 - x : x;
        const auto sx = static_cast<std::size_t>(
            std::clamp<long>(static_cast<long>(xx + ox) - static_cast<long>(pad), 0, static_cast<long>(w) - 1));
        for (std::size_t ch = 0; ch < c; ++ch) {
          dst[(y * w + x) * c + ch] = static_cast<float>(src[(sy * w + sx) * c + ch]) / 255.0f;
        }
      }
    }
    if (data_->labeled) out.labels.push_back(data_->labels[idx]);
  }
  return out;
}

std::vector<float> to_float_images(const Dataset& data, std::size_t first, std::size_t count) {
  if (first + count > data.size()) throw ConfigError("to_float_images: range out of bounds");
  std::vector<float> out(count * data.image_size());
  const std::size_t offset = first * data.image_size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(data.pixels[offset + i]) / 255.0f;
  return out;
}

}  // namespace cmae
