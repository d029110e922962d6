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

// Procedural polyp-like corpus, on-disk dataset layout and batching.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "depthpolyp/errors.hpp"
#include "depthpolyp/image.hpp"
#include "depthpolyp/rng.hpp"
#include "depthpolyp/tensor.hpp"

namespace depthpolyp {

namespace detail {

struct Blob {
  double cx, cy, ra, rb, angle;
  double h2, p2, h3, p3;  // boundary harmonics: amplitude, phase

  /// Normalised radius: < 1 inside the perturbed ellipse.
  double rho(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / ra, v = (-dx * s + dy * c) / rb;
    const double t = std::atan2(v, u);
    const double edge = 1.0 + h2 * std::cos(2.0 * t + p2) + h3 * std::cos(3.0 * t + p3);
    return std::sqrt(u * u + v * v) / edge;
  }
};

}  // namespace detail

/// One synthetic sample, a pure function of (size, seed, index): 1-3
/// perturbed-ellipse "polyps" on a textured, vignetted background; mask is
/// the blob support; depth is a radial far-field with the blobs raised
/// toward the camera (lower values), normalised to [0, 1].
inline Sample synth_sample(std::size_t size, std::uint64_t seed, std::uint64_t index) {
  if (size == 0 || size % 32 != 0) throw ConfigError("synthetic image size " + std::to_string(size) + " must be a positive multiple of 32");
  Rng rng(seed, index, 0);
  const double n = static_cast<double>(size);
  const double tint[3] = {0.62 + 0.10 * rng.uniform(), 0.30 + 0.08 * rng.uniform(), 0.26 + 0.08 * rng.uniform()};
  const double polyp[3] = {tint[0] + 0.18 + 0.08 * rng.uniform(), tint[1] + 0.20 + 0.08 * rng.uniform(),
                           tint[2] + 0.12 + 0.06 * rng.uniform()};
  struct Wave { double fx, fy, phase, amp; };
  Wave waves[3];
  for (auto& w : waves) {
    const double freq = rng.uniform(2.0, 6.0) * 2.0 * std::numbers::pi / n;
    const double dir = rng.uniform(0.0, std::numbers::pi);
    w = {freq * std::cos(dir), freq * std::sin(dir), rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.02, 0.05)};
  }
  const auto count = rng.uniform_int(1, 3);
  std::vector<detail::Blob> blobs;
  for (std::int64_t b = 0; b < count; ++b) {
    detail::Blob blob{};
    blob.ra = n * rng.uniform(0.09, 0.2);
    blob.rb = blob.ra * rng.uniform(0.65, 1.0);
    blob.cx = n * rng.uniform(0.22, 0.78);
    blob.cy = n * rng.uniform(0.22, 0.78);
    blob.angle = rng.uniform(0.0, std::numbers::pi);
    blob.h2 = rng.uniform(0.0, 0.12);
    blob.p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    blob.h3 = rng.uniform(0.0, 0.08);
    blob.p3 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    blobs.push_back(blob);
  }

  Sample s{"synth_" + std::to_string(index), Image(3, size, size), Image(1, size, size), Image(1, size, size)};
  Rng grain(seed, index, 1);
  const double c0 = (n - 1.0) / 2.0;
  std::vector<double> depth(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      const double radial = std::hypot(fx - c0, fy - c0) / (c0 * std::numbers::sqrt2);
      double texture = 0.0;
      for (const auto& w : waves) texture += w.amp * std::sin(w.fx * fx + w.fy * fy + w.phase);
      double inside = 0.0, bump = 0.0;
      for (const auto& b : blobs) {
        const double r = b.rho(fx, fy);
        if (r < 1.0) {
          inside = 1.0;
          bump = std::max(bump, 1.0 - r * r);
        }
      }
      const double shade = 1.0 - 0.35 * radial * radial;
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = inside > 0.0 ? polyp[c] * (0.85 + 0.25 * bump) : tint[c];
        const double v = (base + texture) * shade + 0.03 * (grain.uniform() - 0.5);
        s.image.at(c, y, x) = clamp01(static_cast<float>(v));
      }
      s.mask.at(0, y, x) = static_cast<float>(inside);
      depth[y * size + x] = 0.3 + 0.6 * (1.0 - radial) - 0.35 * bump;
    }
  }
  const auto [lo, hi] = std::minmax_element(depth.begin(), depth.end());
  const double span = std::max(*hi - *lo, 1e-12);
  for (std::size_t i = 0; i < depth.size(); ++i) s.depth.data[i] = static_cast<float>((depth[i] - *lo) / span);
  return s;
}

inline std::vector<Sample> synth_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_sample(size, seed, i));
  return out;
}

/// Checks the Sample invariants: 3-channel image, binary mask, matching
/// sizes, depth (if present) in [0, 1].
inline void validate_sample(const Sample& s) {
  if (s.image.channels != 3) throw DataError(s.id + ": image has " + std::to_string(s.image.channels) + " channels");
  if (s.mask.channels != 1 || !s.image.same_size(s.mask)) throw DataError(s.id + ": mask size differs from image");
  for (float v : s.mask.data)
    if (v != 0.0f && v != 1.0f) throw DataError(s.id + ": mask is not binary");
  if (!s.depth.data.empty()) {
    if (s.depth.channels != 1 || !s.image.same_size(s.depth)) throw DataError(s.id + ": depth size differs from image");
    for (float v : s.depth.data)
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError(s.id + ": depth outside [0, 1]");
  }
}

// Layout: <dir>/index.txt (one id per line, corpus order), images/<id>.ppm,
// masks/<id>.pgm (0/255), depth/<id>.pgm (optional).

inline void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::filesystem::create_directories(dir / "depth");
  std::ofstream index(dir / "index.txt");
  if (!index) throw IoError("cannot write " + (dir / "index.txt").string());
  for (const auto& s : samples) {
    write_pnm(s.image, dir / "images" / (s.id + ".ppm"));
    write_pnm(s.mask, dir / "masks" / (s.id + ".pgm"));
    if (!s.depth.data.empty()) write_pnm(s.depth, dir / "depth" / (s.id + ".pgm"));
    index << s.id << "\n";
  }
}

inline std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.txt";
  std::ifstream index(index_path);
  if (!index) throw IoError("dataset index not found: " + index_path.string());
  std::vector<Sample> out;
  std::string id;
  while (std::getline(index, id)) {
    if (id.empty()) continue;
    Sample s;
    s.id = id;
    s.image = read_pnm(dir / "images" / (id + ".ppm"));
    s.mask = read_pnm(dir / "masks" / (id + ".pgm"));
    const auto depth_path = dir / "depth" / (id + ".pgm");
    if (std::filesystem::exists(depth_path)) s.depth = read_pnm(depth_path);
    validate_sample(s);
    out.push_back(std::move(s));
  }
  return out;
}

struct Batch {
  Tensor<float> image;
  Tensor<float> mask;
  Tensor<float> depth;
};

/// Stacks the selected samples into [B,3,H,W] / [B,1,H,W] tensors. A sample
/// without depth contributes a zero depth map.
inline Batch make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw UsageError("make_batch: no samples");
  const std::size_t h = samples[0]->image.height, w = samples[0]->image.width, b = samples.size();
  std::vector<float> img, mask, depth;
  img.reserve(b * 3 * h * w);
  mask.reserve(b * h * w);
  depth.reserve(b * h * w);
  for (const Sample* s : samples) {
    if (s->image.height != h || s->image.width != w) throw DimensionError("make_batch: " + s->id + " differs in size");
    img.insert(img.end(), s->image.data.begin(), s->image.data.end());
    mask.insert(mask.end(), s->mask.data.begin(), s->mask.data.end());
    if (s->depth.data.empty()) depth.resize(depth.size() + h * w, 0.0f);
    else depth.insert(depth.end(), s->depth.data.begin(), s->depth.data.end());
  }
  return {Tensor<float>(Shape{b, 3, h, w}, std::move(img)), Tensor<float>(Shape{b, 1, h, w}, std::move(mask)),
          Tensor<float>(Shape{b, 1, h, w}, std::move(depth))};
}

}  // namespace depthpolyp
