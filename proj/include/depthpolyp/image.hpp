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

// Planar float images in [0, 1] and binary PPM/PGM file I/O.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "depthpolyp/errors.hpp"

namespace depthpolyp {

/// Channel-major (CHW) float image.
struct Image {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const { return height * width; }
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }
  bool operator==(const Image& o) const = default;
};

/// One corpus entry: RGB image, binary mask, pseudo-depth in [0, 1].
struct Sample {
  std::string id;
  Image image;
  Image mask;
  Image depth;
};

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0f));
}

namespace detail {

inline std::string read_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace detail

/// Writes P6 (3 channels) or P5 (1 channel), 8-bit.
inline void write_pnm(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw UsageError("write_pnm: " + std::to_string(img.channels) + " channels; expected 1 or 3");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> bytes(img.channels * img.plane());
  for (std::size_t p = 0; p < img.plane(); ++p) {
    for (std::size_t c = 0; c < img.channels; ++c) bytes[p * img.channels + c] = to_byte(img.data[c * img.plane() + p]);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

/// Reads 8-bit P5/P6 into [0, 1] floats.
inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = detail::read_token(in);
  if (magic != "P5" && magic != "P6") throw IoError(path.string() + ": not a binary PGM/PPM file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(detail::read_token(in));
    h = std::stoul(detail::read_token(in));
    maxval = std::stoul(detail::read_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed header");
  }
  if (maxval != 255 || w == 0 || h == 0) throw IoError(path.string() + ": unsupported header");
  Image img(magic == "P6" ? 3 : 1, h, w);
  std::vector<std::uint8_t> bytes(img.channels * img.plane());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError(path.string() + ": truncated pixel data");
  for (std::size_t p = 0; p < img.plane(); ++p) {
    for (std::size_t c = 0; c < img.channels; ++c) img.data[c * img.plane() + p] = bytes[p * img.channels + c] / 255.0f;
  }
  return img;
}

}  // namespace depthpolyp
