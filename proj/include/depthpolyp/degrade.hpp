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

// Synthetic image degradations for the clean/noisy robustness protocol, and
// the seeded pipeline that composes them.

#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "depthpolyp/errors.hpp"
#include "depthpolyp/image.hpp"
#include "depthpolyp/rng.hpp"

namespace depthpolyp {

// ---------------------------------------------------------------------------
// Border handling and separable filtering.

/// OpenCV-style BORDER_REFLECT_101 (gfedcb|abcdefgh|gfedcba) for any offset.
inline std::ptrdiff_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Full 2-D correlation of every channel with a square odd kernel, reflect-101
/// borders.
inline Image filter2d(const Image& img, const std::vector<double>& kernel, std::size_t k) {
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const auto h = static_cast<std::ptrdiff_t>(img.height), w = static_cast<std::ptrdiff_t>(img.width);
  Image out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -r; i <= r; ++i) {
          const auto sy = static_cast<std::size_t>(reflect101(y + i, h));
          for (std::ptrdiff_t j = -r; j <= r; ++j) {
            const double kv = kernel[static_cast<std::size_t>((i + r) * static_cast<std::ptrdiff_t>(k) + j + r)];
            if (kv == 0.0) continue;
            acc += kv * img.at(c, sy, static_cast<std::size_t>(reflect101(x + j, w)));
          }
        }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

/// Horizontal pass then vertical pass with the same 1-D kernel.
inline Image filter_separable(const Image& img, const std::vector<double>& k1d) {
  const auto r = static_cast<std::ptrdiff_t>(k1d.size() / 2);
  const auto h = static_cast<std::ptrdiff_t>(img.height), w = static_cast<std::ptrdiff_t>(img.width);
  std::vector<double> tmp(img.data.size());
  Image out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c) {
    double* t = tmp.data() + c * img.plane();
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t j = -r; j <= r; ++j) {
          acc += k1d[static_cast<std::size_t>(j + r)] *
                 img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(reflect101(x + j, w)));
        }
        t[y * w + x] = acc;
      }
    }
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -r; i <= r; ++i) acc += k1d[static_cast<std::size_t>(i + r)] * t[reflect101(y + i, h) * w + x];
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operators.

/// k x k kernel holding a 1-px line through the centre at `angle_deg`
/// (0 = horizontal, counter-clockwise), normalised to sum 1.
inline std::vector<double> motion_blur_kernel(std::size_t k, double angle_deg) {
  if (k < 3 || k % 2 == 0) throw ConfigError("motion blur kernel size " + std::to_string(k) + " must be odd and >= 3");
  const double r = static_cast<double>(k / 2);
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  std::vector<double> kernel(k * k, 0.0);
  const std::size_t samples = 8 * k;
  for (std::size_t s = 0; s <= samples; ++s) {
    const double t = -r + 2.0 * r * static_cast<double>(s) / static_cast<double>(samples);
    const auto row = static_cast<std::size_t>(std::lround(r - t * st));
    const auto col = static_cast<std::size_t>(std::lround(r + t * ct));
    kernel[row * k + col] = 1.0;
  }
  double total = 0.0;
  for (double v : kernel) total += v;
  for (double& v : kernel) v /= total;
  return kernel;
}

inline Image motion_blur(const Image& img, std::size_t k, double angle_deg) {
  return filter2d(img, motion_blur_kernel(k, angle_deg), k);
}

/// Default sigma for a Gaussian of size k: 0.3 ((k - 1) / 2 - 1) + 0.8.
inline double gaussian_sigma_for_size(std::size_t k) { return 0.3 * ((static_cast<double>(k) - 1.0) / 2.0 - 1.0) + 0.8; }

/// Smallest odd size covering +-3 sigma.
inline std::size_t gaussian_size_for_sigma(double sigma) {
  return 2 * static_cast<std::size_t>(std::ceil(3.0 * sigma)) + 1;
}

inline std::vector<double> gaussian_kernel(std::size_t k, double sigma) {
  if (k % 2 == 0) throw ConfigError("gaussian kernel size " + std::to_string(k) + " must be odd");
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  const double r = static_cast<double>(k / 2);
  std::vector<double> g(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double d = static_cast<double>(i) - r;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

inline Image gaussian_blur(const Image& img, std::size_t k, double sigma) {
  return filter_separable(img, gaussian_kernel(k, sigma));
}
inline Image gaussian_blur(const Image& img, std::size_t k) { return gaussian_blur(img, k, gaussian_sigma_for_size(k)); }

inline Image brightness(const Image& img, double alpha) {
  Image out = img;
  if (alpha == 0.0) return out;
  for (float& v : out.data) v = clamp01(static_cast<float>(v + alpha));
  return out;
}

/// (x - mean) (1 + beta) + mean per channel, clamped.
inline Image contrast(const Image& img, double beta) {
  Image out = img;
  if (beta == 0.0) return out;
  for (std::size_t c = 0; c < img.channels; ++c) {
    float* p = out.data.data() + c * img.plane();
    double mean = 0.0;
    for (std::size_t i = 0; i < img.plane(); ++i) mean += p[i];
    mean /= static_cast<double>(img.plane());
    for (std::size_t i = 0; i < img.plane(); ++i) p[i] = clamp01(static_cast<float>((p[i] - mean) * (1.0 + beta) + mean));
  }
  return out;
}

/// Standard JPEG luminance quantisation table, row-major.
inline constexpr std::array<int, 64> kJpegLuminance = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

/// Quality-scaled table: scale = 5000/q below 50, else 200 - 2q; entries
/// clamp(floor((Q scale + 50) / 100), 1, 255).
inline std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("jpeg quality " + std::to_string(quality) + " outside [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (std::size_t i = 0; i < 64; ++i) q[i] = std::clamp((kJpegLuminance[i] * scale + 50) / 100, 1, 255);
  return q;
}

namespace detail {

inline const std::array<double, 64>& dct_basis() {
  static const std::array<double, 64> basis = [] {
    std::array<double, 64> b{};
    for (std::size_t u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
      for (std::size_t x = 0; x < 8; ++x) {
        b[u * 8 + x] = cu * std::cos((2.0 * static_cast<double>(x) + 1.0) * static_cast<double>(u) * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

}  // namespace detail

/// Orthonormal 8x8 DCT-II of a row-major block.
inline std::array<double, 64> dct8x8(const std::array<double, 64>& block) {
  const auto& b = detail::dct_basis();
  std::array<double, 64> tmp{}, out{};
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (std::size_t x = 0; x < 8; ++x) acc += b[v * 8 + x] * block[y * 8 + x];
      tmp[y * 8 + v] = acc;
    }
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (std::size_t y = 0; y < 8; ++y) acc += b[u * 8 + y] * tmp[y * 8 + v];
      out[u * 8 + v] = acc;
    }
  return out;
}

inline std::array<double, 64> idct8x8(const std::array<double, 64>& coef) {
  const auto& b = detail::dct_basis();
  std::array<double, 64> tmp{}, out{};
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (std::size_t v = 0; v < 8; ++v) acc += b[v * 8 + x] * coef[u * 8 + v];
      tmp[u * 8 + x] = acc;
    }
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (std::size_t u = 0; u < 8; ++u) acc += b[u * 8 + y] * tmp[u * 8 + x];
      out[y * 8 + x] = acc;
    }
  return out;
}

/// Per-channel 8x8 DCT quantisation on the 0..255 scale (level shift 128),
/// no chroma subsampling or entropy coding. Partial edge blocks are padded
/// by edge replication.
inline Image jpeg_compress(const Image& img, int quality) {
  const auto q = jpeg_quant_table(quality);
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t by = 0; by < img.height; by += 8) {
      for (std::size_t bx = 0; bx < img.width; bx += 8) {
        std::array<double, 64> block{};
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x) {
            const std::size_t sy = std::min(by + y, img.height - 1), sx = std::min(bx + x, img.width - 1);
            block[y * 8 + x] = img.at(c, sy, sx) * 255.0 - 128.0;
          }
        auto coef = dct8x8(block);
        for (std::size_t i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / q[i]) * q[i];
        const auto rec = idct8x8(coef);
        for (std::size_t y = 0; y < 8 && by + y < img.height; ++y)
          for (std::size_t x = 0; x < 8 && bx + x < img.width; ++x) {
            out.at(c, by + y, bx + x) = clamp01(static_cast<float>((rec[y * 8 + x] + 128.0) / 255.0));
          }
      }
    }
  }
  return out;
}

struct LightSpot {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
};

/// Blends toward white with alpha = intensity * exp(-r^2 / (2 (R/2)^2)) per
/// spot, applied in order.
inline Image light_spots(const Image& img, const std::vector<LightSpot>& spots, double intensity) {
  Image out = img;
  for (const auto& s : spots) {
    const double sigma = s.radius / 2.0;
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        const double dx = static_cast<double>(x) - s.x, dy = static_cast<double>(y) - s.y;
        const double a = intensity * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < img.channels; ++c) {
          float& v = out.at(c, y, x);
          v = clamp01(static_cast<float>((1.0 - a) * v + a));
        }
      }
    }
  }
  return out;
}

/// Uniform blend toward white: (1 - f) x + f.
inline Image fog(const Image& img, double coef) {
  Image out = img;
  if (coef == 0.0) return out;
  for (float& v : out.data) v = clamp01(static_cast<float>((1.0 - coef) * v + coef));
  return out;
}

namespace detail {

inline float sample_bilinear(const Image& img, std::size_t c, double sy, double sx) {
  const auto h = static_cast<std::ptrdiff_t>(img.height), w = static_cast<std::ptrdiff_t>(img.width);
  const double fy = std::floor(sy), fx = std::floor(sx);
  const double ty = sy - fy, tx = sx - fx;
  const auto y0 = static_cast<std::ptrdiff_t>(fy), x0 = static_cast<std::ptrdiff_t>(fx);
  const auto ya = static_cast<std::size_t>(reflect101(y0, h)), yb = static_cast<std::size_t>(reflect101(y0 + 1, h));
  const auto xa = static_cast<std::size_t>(reflect101(x0, w)), xb = static_cast<std::size_t>(reflect101(x0 + 1, w));
  const double top = img.at(c, ya, xa) + tx * (img.at(c, ya, xb) - img.at(c, ya, xa));
  const double bot = img.at(c, yb, xa) + tx * (img.at(c, yb, xb) - img.at(c, yb, xa));
  return static_cast<float>(top + ty * (bot - top));
}

inline float sample_nearest(const Image& img, std::size_t c, double sy, double sx) {
  const auto y = reflect101(static_cast<std::ptrdiff_t>(std::lround(sy)), static_cast<std::ptrdiff_t>(img.height));
  const auto x = reflect101(static_cast<std::ptrdiff_t>(std::lround(sx)), static_cast<std::ptrdiff_t>(img.width));
  return img.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
}

}  // namespace detail

/// Radial remap about the image centre: output pixel p samples the source at
/// c + (p - c)(1 + k r^2) + shift * size, with r the distance to the centre
/// normalised by the half-diagonal. Image and depth are sampled bilinearly,
/// the mask by nearest neighbour so it stays binary. Reflect-101 outside.
inline void optical_distortion(Sample& s, double k, double shift_x, double shift_y) {
  if (!s.image.same_size(s.mask) || !s.image.same_size(s.depth)) {
    throw DimensionError("optical_distortion: image, mask and depth sizes differ");
  }
  if (k == 0.0 && shift_x == 0.0 && shift_y == 0.0) return;
  const double cy = (static_cast<double>(s.image.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(s.image.width) - 1.0) / 2.0;
  const double half_diag2 = std::max(cx * cx + cy * cy, 1.0);
  Image img(s.image.channels, s.image.height, s.image.width);
  Image mask(s.mask.channels, s.mask.height, s.mask.width);
  Image depth(s.depth.channels, s.depth.height, s.depth.width);
  for (std::size_t y = 0; y < s.image.height; ++y) {
    for (std::size_t x = 0; x < s.image.width; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double f = 1.0 + k * (dx * dx + dy * dy) / half_diag2;
      const double sy = cy + dy * f + shift_y * static_cast<double>(s.image.height);
      const double sx = cx + dx * f + shift_x * static_cast<double>(s.image.width);
      for (std::size_t c = 0; c < img.channels; ++c) img.at(c, y, x) = detail::sample_bilinear(s.image, c, sy, sx);
      for (std::size_t c = 0; c < mask.channels; ++c) mask.at(c, y, x) = detail::sample_nearest(s.mask, c, sy, sx);
      for (std::size_t c = 0; c < depth.channels; ++c) depth.at(c, y, x) = clamp01(detail::sample_bilinear(s.depth, c, sy, sx));
    }
  }
  s.image = std::move(img);
  s.mask = std::move(mask);
  s.depth = std::move(depth);
}

// ---------------------------------------------------------------------------
// Pipeline.

/// Operator parameters and firing probabilities, in application order.
struct DegradationSpec {
  struct MotionBlur { double p = 1.0; std::size_t min_kernel = 3, max_kernel = 29; };
  struct GaussianBlur { double p = 0.2; std::vector<std::size_t> sizes{3, 5, 7}; bool literal_sigma = false; };
  struct Range { double p; double lo, hi; };
  struct Jpeg { double p = 0.5; int min_quality = 30, max_quality = 70; };
  struct LightSpots { double p = 0.8; double min_radius = 5, max_radius = 40, intensity = 0.85; int min_spots = 1, max_spots = 3; };
  struct Distortion { double p = 0.3; double distort = 0.05, shift = 0.05; };

  MotionBlur motion_blur;
  GaussianBlur gaussian_blur;
  Range brightness{1.0, -0.1, 0.2};
  Range contrast{1.0, -0.2, 0.2};
  Jpeg jpeg;
  LightSpots light_spots;
  Range fog{0.3, 0.5, 0.8};
  Distortion optical_distortion;

  static constexpr std::array<const char*, 8> kOperatorNames = {
      "motion_blur", "gaussian_blur", "brightness", "contrast", "jpeg", "light_spots", "fog", "optical_distortion"};

  std::array<double, 8> probabilities() const {
    return {motion_blur.p, gaussian_blur.p, brightness.p, contrast.p, jpeg.p, light_spots.p, fog.p, optical_distortion.p};
  }

  void set_all_probabilities(double p) {
    motion_blur.p = gaussian_blur.p = brightness.p = contrast.p = p;
    jpeg.p = light_spots.p = fog.p = optical_distortion.p = p;
  }

  void validate() const {
    const auto probs = probabilities();
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!(probs[i] >= 0.0 && probs[i] <= 1.0)) {
        throw ConfigError(std::string(kOperatorNames[i]) + " probability " + std::to_string(probs[i]) + " outside [0, 1]");
      }
    }
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    need(motion_blur.min_kernel >= 3 && motion_blur.min_kernel % 2 == 1 && motion_blur.max_kernel % 2 == 1 &&
             motion_blur.min_kernel <= motion_blur.max_kernel,
         "motion_blur kernel range must be odd, >= 3 and non-empty");
    need(!gaussian_blur.sizes.empty(), "gaussian_blur sizes empty");
    for (auto k : gaussian_blur.sizes) {
      need(gaussian_blur.literal_sigma ? k > 0 : k % 2 == 1, "gaussian_blur size " + std::to_string(k) + " must be odd");
    }
    need(brightness.lo <= brightness.hi, "brightness range empty");
    need(contrast.lo <= contrast.hi && contrast.lo > -1.0, "contrast range empty or below -1");
    need(jpeg.min_quality >= 1 && jpeg.max_quality <= 100 && jpeg.min_quality <= jpeg.max_quality,
         "jpeg quality range must lie in [1, 100]");
    need(light_spots.min_radius > 0 && light_spots.min_radius <= light_spots.max_radius, "light_spots radius range invalid");
    need(light_spots.intensity >= 0 && light_spots.intensity <= 1, "light_spots intensity outside [0, 1]");
    need(light_spots.min_spots >= 0 && light_spots.min_spots <= light_spots.max_spots, "light_spots count range invalid");
    need(fog.lo > 0 && fog.hi < 1 && fog.lo <= fog.hi, "fog coefficient range must lie in (0, 1)");
    need(optical_distortion.distort >= 0 && optical_distortion.shift >= 0, "optical_distortion limits must be >= 0");
  }
};

/// One fired operator with the parameters it was drawn with, enough to
/// re-apply it without the generator.
struct AppliedOp {
  std::string name;
  std::vector<std::pair<std::string, double>> params;

  double get(const std::string& key) const {
    for (const auto& [k, v] : params)
      if (k == key) return v;
    throw DataError("operator " + name + " has no parameter " + key);
  }
  bool operator==(const AppliedOp&) const = default;
};

/// Draws which operators fire for sample `index` and their parameters. The
/// generator for operator i is keyed (seed, index, i); its first draw decides
/// firing.
inline std::vector<AppliedOp> draw_operators(const DegradationSpec& spec, std::uint64_t seed, std::uint64_t index,
                                             std::size_t height, std::size_t width) {
  std::vector<AppliedOp> ops;
  const auto probs = spec.probabilities();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    Rng rng(seed, index, i);
    if (!(rng.uniform() < probs[i])) continue;
    AppliedOp op{DegradationSpec::kOperatorNames[i], {}};
    switch (i) {
      case 0: {
        const auto lo = static_cast<std::int64_t>(spec.motion_blur.min_kernel / 2);
        const auto hi = static_cast<std::int64_t>(spec.motion_blur.max_kernel / 2);
        op.params = {{"kernel", static_cast<double>(2 * rng.uniform_int(lo, hi) + 1)}, {"angle", rng.uniform(0.0, 180.0)}};
        break;
      }
      case 1: {
        const auto& sizes = spec.gaussian_blur.sizes;
        const auto pick = static_cast<double>(sizes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(sizes.size()) - 1))]);
        if (spec.gaussian_blur.literal_sigma) {
          op.params = {{"kernel", static_cast<double>(gaussian_size_for_sigma(pick))}, {"sigma", pick}};
        } else {
          op.params = {{"kernel", pick}, {"sigma", gaussian_sigma_for_size(static_cast<std::size_t>(pick))}};
        }
        break;
      }
      case 2: op.params = {{"alpha", rng.uniform(spec.brightness.lo, spec.brightness.hi)}}; break;
      case 3: op.params = {{"beta", rng.uniform(spec.contrast.lo, spec.contrast.hi)}}; break;
      case 4: op.params = {{"quality", static_cast<double>(rng.uniform_int(spec.jpeg.min_quality, spec.jpeg.max_quality))}}; break;
      case 5: {
        const auto& ls = spec.light_spots;
        const auto count = rng.uniform_int(ls.min_spots, ls.max_spots);
        op.params = {{"intensity", ls.intensity}, {"count", static_cast<double>(count)}};
        for (std::int64_t s = 0; s < count; ++s) {
          const std::string n = std::to_string(s);
          op.params.emplace_back("x" + n, rng.uniform(0.0, static_cast<double>(width)));
          op.params.emplace_back("y" + n, rng.uniform(0.0, static_cast<double>(height)));
          op.params.emplace_back("radius" + n, rng.uniform(ls.min_radius, ls.max_radius));
        }
        break;
      }
      case 6: op.params = {{"coef", rng.uniform(spec.fog.lo, spec.fog.hi)}}; break;
      case 7: {
        const auto& d = spec.optical_distortion;
        op.params = {{"k", rng.uniform(-d.distort, d.distort)},
                     {"shift_x", rng.uniform(-d.shift, d.shift)},
                     {"shift_y", rng.uniform(-d.shift, d.shift)}};
        break;
      }
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

/// Re-applies recorded operators in order. Photometric operators touch the
/// image only; optical_distortion warps image, mask and depth together.
inline void apply_operators(Sample& s, const std::vector<AppliedOp>& ops) {
  for (const auto& op : ops) {
    if (op.name == "motion_blur") {
      s.image = motion_blur(s.image, static_cast<std::size_t>(op.get("kernel")), op.get("angle"));
    } else if (op.name == "gaussian_blur") {
      s.image = gaussian_blur(s.image, static_cast<std::size_t>(op.get("kernel")), op.get("sigma"));
    } else if (op.name == "brightness") {
      s.image = brightness(s.image, op.get("alpha"));
    } else if (op.name == "contrast") {
      s.image = contrast(s.image, op.get("beta"));
    } else if (op.name == "jpeg") {
      s.image = jpeg_compress(s.image, static_cast<int>(op.get("quality")));
    } else if (op.name == "light_spots") {
      std::vector<LightSpot> spots;
      const auto count = static_cast<std::size_t>(op.get("count"));
      for (std::size_t i = 0; i < count; ++i) {
        const std::string n = std::to_string(i);
        spots.push_back({op.get("x" + n), op.get("y" + n), op.get("radius" + n)});
      }
      s.image = light_spots(s.image, spots, op.get("intensity"));
    } else if (op.name == "fog") {
      s.image = fog(s.image, op.get("coef"));
    } else if (op.name == "optical_distortion") {
      optical_distortion(s, op.get("k"), op.get("shift_x"), op.get("shift_y"));
    } else {
      throw ConfigError("unknown degradation operator '" + op.name + "'");
    }
  }
}

struct DegradedSample {
  Sample noisy;
  std::vector<AppliedOp> ops;
};

/// Pure function of (spec, sample, seed, index).
inline DegradedSample apply_pipeline(const DegradationSpec& spec, const Sample& clean, std::uint64_t seed,
                                     std::uint64_t index) {
  DegradedSample out{clean, draw_operators(spec, seed, index, clean.image.height, clean.image.width)};
  apply_operators(out.noisy, out.ops);
  return out;
}

/// Degrades every sample, index i keyed by its position, on `threads`
/// workers. Output is independent of the thread count.
inline std::vector<DegradedSample> degrade_corpus(const DegradationSpec& spec, const std::vector<Sample>& clean,
                                                  std::uint64_t seed, std::size_t threads = 1) {
  spec.validate();
  std::vector<DegradedSample> out(clean.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < clean.size(); i = next++) out[i] = apply_pipeline(spec, clean[i], seed, i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = clean.size();
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, clean.size()));
  if (threads == 1) {
    worker();
    if (failure) std::rethrow_exception(failure);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace depthpolyp
