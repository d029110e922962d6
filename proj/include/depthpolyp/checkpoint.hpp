// Copyright 2026 The DepthPolyp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary checkpoint format (all integers little-endian):
//
//   "DPLY"  u32 version
//   repeated: u32 name_len, name bytes, u8 dtype (0 = f32),
//             u32 n, u32 c, u32 h, u32 w, n*c*h*w f32 values
//   u32 CRC-32 of every record byte (the region after the version field)
//
// The network configuration travels as an ordinary record named
// "meta.network_config".

#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "depthpolyp/network.hpp"

namespace depthpolyp {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline const std::string kConfigRecord = "meta.network_config";

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::vector<std::uint8_t> out = {'D', 'P', 'L', 'Y'};
  detail::put_u32(out, kCheckpointVersion);
  const std::size_t payload_start = out.size();
  for (const auto& r : records) {
    if (r.values.size() != r.shape.numel()) {
      throw DimensionError("checkpoint record '" + r.name + "' value count does not match shape");
    }
    detail::put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(kDtypeF32);
    for (std::size_t d : {r.shape.n, r.shape.c, r.shape.h, r.shape.w}) {
      detail::put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (float v : r.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  detail::put_u32(out, detail::crc32_of(std::span(out).subspan(payload_start)));
  return out;
}

inline std::vector<CheckpointRecord> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || bytes[0] != 'D' || bytes[1] != 'P' || bytes[2] != 'L' || bytes[3] != 'Y') {
    throw IoError("not a checkpoint (bad magic)");
  }
  detail::ByteReader header(bytes.subspan(4, 4));
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto payload = bytes.subspan(8, bytes.size() - 12);
  detail::ByteReader trailer(bytes.subspan(bytes.size() - 4));
  if (trailer.u32() != detail::crc32_of(payload)) throw IoError("checkpoint CRC mismatch");

  std::vector<CheckpointRecord> records;
  detail::ByteReader in(payload);
  while (in.pos() < payload.size()) {
    CheckpointRecord r;
    const std::uint32_t len = in.u32();
    r.name = in.str(len);
    if (const auto dtype = in.u8(); dtype != kDtypeF32) {
      throw IoError("record '" + r.name + "' has unknown dtype " + std::to_string(dtype));
    }
    r.shape.n = in.u32();
    r.shape.c = in.u32();
    r.shape.h = in.u32();
    r.shape.w = in.u32();
    r.values.resize(r.shape.numel());
    for (float& v : r.values) v = std::bit_cast<float>(in.u32());
    records.push_back(std::move(r));
  }
  return records;
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::vector<float> encode_config(const NetworkConfig& c) {
  std::vector<float> v = {static_cast<float>(c.input_height), static_cast<float>(c.input_width)};
  for (std::size_t w : c.encoder_widths) v.push_back(static_cast<float>(w));
  for (std::size_t x : {c.encoder_depth, c.encoder_kernel, c.unified_dim, c.split_ratio, c.groups,
                        c.stage2_width, c.fused_dim, c.dw_kernel}) {
    v.push_back(static_cast<float>(x));
  }
  return v;
}

inline NetworkConfig decode_config(std::span<const float> v) {
  if (v.size() != 14) throw DataError("network config record must hold 14 values");
  auto at = [&](std::size_t i) { return static_cast<std::size_t>(v[i]); };
  NetworkConfig c;
  c.input_height = at(0);
  c.input_width = at(1);
  for (std::size_t i = 0; i < 4; ++i) c.encoder_widths[i] = at(2 + i);
  c.encoder_depth = at(6);
  c.encoder_kernel = at(7);
  c.unified_dim = at(8);
  c.split_ratio = at(9);
  c.groups = at(10);
  c.stage2_width = at(11);
  c.fused_dim = at(12);
  c.dw_kernel = at(13);
  c.validate();
  return c;
}

template <std::floating_point T>
std::vector<CheckpointRecord> model_records(const DepthPolyp<T>& model) {
  std::vector<CheckpointRecord> out;
  auto cfg = encode_config(model.config());
  out.push_back({kConfigRecord, Shape{1, cfg.size(), 1, 1}, cfg});
  for (const auto& nt : model.parameters().all()) {
    out.push_back({nt.name, nt.tensor.shape(),
                   std::vector<float>(nt.tensor.data().begin(), nt.tensor.data().end())});
  }
  return out;
}

template <std::floating_point T>
void save_model(const DepthPolyp<T>& model, const std::filesystem::path& path) {
  write_bytes(path, encode_checkpoint(model_records(model)));
}

inline DepthPolyp<float> model_from_records(const std::vector<CheckpointRecord>& records) {
  const CheckpointRecord* cfg = nullptr;
  std::vector<NamedTensor<float>> tensors;
  for (const auto& r : records) {
    if (r.name == kConfigRecord) {
      cfg = &r;
    } else {
      tensors.push_back({r.name, Tensor<float>(r.shape, r.values), true});
    }
  }
  if (cfg == nullptr) throw DataError("checkpoint lacks '" + kConfigRecord + "'");
  DepthPolyp<float> model(decode_config(cfg->values));
  model.load(tensors);
  return model;
}

inline DepthPolyp<float> load_model(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return model_from_records(decode_checkpoint(bytes));
}

}  // namespace depthpolyp
