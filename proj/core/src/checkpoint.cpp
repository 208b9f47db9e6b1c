// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cmae/errors.hpp"

namespace cmae {

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::vector<char>& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError(path_.string() + ": truncated " + what + " at byte offset " + std::to_string(pos_));
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  const char* take(std::size_t n, const char* what) {
    need(n, what);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<char>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedArray> records) {
  std::vector<char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  for (const auto& rec : records) {
    if (shape_numel(rec.shape) != rec.values.size()) {
      throw ShapeError("checkpoint: record '" + rec.name + "' has shape " + shape_str(rec.shape) + " but " +
                       std::to_string(rec.values.size()) + " values");
    }
    put_u32(out, static_cast<std::uint32_t>(rec.name.size()));
    out.insert(out.end(), rec.name.begin(), rec.name.end());
    put_u32(out, static_cast<std::uint32_t>(rec.shape.size()));
    for (std::size_t e : rec.shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : rec.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("cannot open " + path.string() + " for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("write failed for " + path.string());
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader in(bytes, path);
  const char* magic = in.take(sizeof(kCheckpointMagic), "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw DataError(path.string() + ": bad checkpoint magic at byte offset 0");
  }
  const std::size_t version_at = in.offset();
  if (const std::uint32_t version = in.u32("version"); version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version) +
                    " at byte offset " + std::to_string(version_at));
  }
  std::vector<NamedArray> records;
  while (!in.at_end()) {
    NamedArray rec;
    const std::uint32_t name_len = in.u32("name length");
    const char* name = in.take(name_len, "name");
    rec.name.assign(name, name_len);
    const std::uint32_t rank = in.u32("rank");
    for (std::uint32_t i = 0; i < rank; ++i) rec.shape.push_back(in.u32("extent"));
    const std::size_t n = shape_numel(rec.shape);
    rec.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) rec.values[i] = std::bit_cast<float>(in.u32("values"));
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace cmae
