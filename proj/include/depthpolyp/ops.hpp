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

// Differentiable kernels. Every op computes its forward pass eagerly and,
// when a tape is current and an input requires gradients, records a closure
// that accumulates input gradients from the output gradient.
//
// Loop nesting is fixed, so results are bit-reproducible run to run.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "depthpolyp/tensor.hpp"

namespace depthpolyp {

enum class Mode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

namespace detail {

template <std::floating_point T>
GradTape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
  GradTape<T>* tape = GradTape<T>::current();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

inline void expect_dim(const char* op, const char* axis, std::size_t got, std::size_t want) {
  if (got != want) {
    throw DimensionError(std::string(op) + ": " + axis + " axis is " + std::to_string(got) +
                         ", expected " + std::to_string(want));
  }
}

inline void expect_same_shape(const char* op, const Shape& a, const Shape& b) {
  expect_dim(op, "batch", b.n, a.n);
  expect_dim(op, "channel", b.c, a.c);
  expect_dim(op, "height", b.h, a.h);
  expect_dim(op, "width", b.w, a.w);
}

// Output range [lo, hi) such that out * stride + offset lands in [0, extent).
inline void valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t extent,
                        std::size_t out_extent, std::size_t& lo, std::size_t& hi) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t first = 0;
  if (offset < 0) first = (-offset + s - 1) / s;
  std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(extent) - 1 - offset);
  last = last < 0 ? -1 : last / s;
  lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(first, 0));
  hi = static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(last + 1, 0, static_cast<std::ptrdiff_t>(out_extent)));
  if (hi < lo) hi = lo;
}

}  // namespace detail

/// Dense K x K convolution, no bias. Used by the stand-in encoder.
template <std::floating_point T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::size_t stride,
                 std::size_t padding) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::expect_dim("conv2d", "weight input-channel", ws.c, xs.c);
  if (ws.h != ws.w) throw ConfigError("conv2d: kernel must be square");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t k = ws.h;
  if (xs.h + 2 * padding < k || xs.w + 2 * padding < k) {
    throw DimensionError("conv2d: spatial size smaller than kernel");
  }
  const std::size_t ho = (xs.h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (xs.w + 2 * padding - k) / stride + 1;
  const Shape os{xs.n, ws.n, ho, wo};
  Tensor<T> out(os);

  // Visits every (output pixel, tap) pair that lands inside the input.
  auto sweep = [xs, ws, os, k, stride, padding](auto&& body) {
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t o = 0; o < ws.n; ++o) {
        const std::size_t out_base = (b * os.c + o) * os.plane();
        for (std::size_t i = 0; i < xs.c; ++i) {
          const std::size_t in_base = (b * xs.c + i) * xs.plane();
          for (std::size_t ky = 0; ky < k; ++ky) {
            std::size_t ylo, yhi;
            detail::valid_range(static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(padding),
                                stride, xs.h, os.h, ylo, yhi);
            for (std::size_t kx = 0; kx < k; ++kx) {
              std::size_t xlo, xhi;
              detail::valid_range(static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(padding),
                                  stride, xs.w, os.w, xlo, xhi);
              const std::size_t widx = ((o * ws.c + i) * k + ky) * k + kx;
              for (std::size_t oy = ylo; oy < yhi; ++oy) {
                const std::size_t iy = oy * stride + ky - padding;
                for (std::size_t ox = xlo; ox < xhi; ++ox) {
                  const std::size_t ix = ox * stride + kx - padding;
                  body(out_base + oy * os.w + ox, in_base + iy * xs.w + ix, widx);
                }
              }
            }
          }
        }
      }
    }
  };

  {
    T* po = out.mutable_data().data();
    const T* px = x.data().data();
    const T* pw = weight.data().data();
    sweep([&](std::size_t oi, std::size_t ii, std::size_t wi) { po[oi] += pw[wi] * px[ii]; });
    MacCounter::add(static_cast<std::uint64_t>(xs.n) * os.c * xs.c * k * k * os.h * os.w);
  }

  if (auto* tape = detail::recording_tape({&x, &weight})) {
    out.set_requires_grad(true);
    auto xn = x.node(), wn = weight.node(), on = out.node();
    tape->record({xn, wn}, on, [xn, wn, on, sweep] {
      const T* g = on->grad.data();
      const T* px = xn->value.data();
      const T* pw = wn->value.data();
      T* gx = xn->requires_grad ? xn->ensure_grad() : nullptr;
      T* gw = wn->requires_grad ? wn->ensure_grad() : nullptr;
      sweep([&](std::size_t oi, std::size_t ii, std::size_t wi) {
        if (gx) gx[ii] += pw[wi] * g[oi];
        if (gw) gw[wi] += g[oi] * px[ii];
      });
    });
  }
  return out;
}

/// 1x1 convolution: out[b,o] = sum_i weight[o,i] * x[b,i]. No bias.
template <std::floating_point T>
Tensor<T> conv2d_pointwise(const Tensor<T>& x, const Tensor<T>& weight) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::expect_dim("conv2d_pointwise", "weight input-channel", ws.c, xs.c);
  detail::expect_dim("conv2d_pointwise", "weight height", ws.h, 1);
  detail::expect_dim("conv2d_pointwise", "weight width", ws.w, 1);
  const std::size_t cin = xs.c, cout = ws.n, hw = xs.plane();
  Tensor<T> out(Shape{xs.n, cout, xs.h, xs.w});
  {
    T* po = out.mutable_data().data();
    const T* px = x.data().data();
    const T* pw = weight.data().data();
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        T* dst = po + (b * cout + o) * hw;
        for (std::size_t i = 0; i < cin; ++i) {
          const T wv = pw[o * cin + i];
          const T* src = px + (b * cin + i) * hw;
          for (std::size_t p = 0; p < hw; ++p) dst[p] += wv * src[p];
          MacCounter::add(hw);
        }
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x, &weight})) {
    out.set_requires_grad(true);
    auto xn = x.node(), wn = weight.node(), on = out.node();
    tape->record({xn, wn}, on, [xn, wn, on, xs, cin, cout, hw] {
      const T* g = on->grad.data();
      const T* px = xn->value.data();
      const T* pw = wn->value.data();
      T* gx = xn->requires_grad ? xn->ensure_grad() : nullptr;
      T* gw = wn->requires_grad ? wn->ensure_grad() : nullptr;
      for (std::size_t b = 0; b < xs.n; ++b) {
        for (std::size_t o = 0; o < cout; ++o) {
          const T* go = g + (b * cout + o) * hw;
          for (std::size_t i = 0; i < cin; ++i) {
            const std::size_t in_off = (b * cin + i) * hw;
            if (gx) {
              const T wv = pw[o * cin + i];
              T* dst = gx + in_off;
              for (std::size_t p = 0; p < hw; ++p) dst[p] += wv * go[p];
            }
            if (gw) {
              T acc{0};
              const T* src = px + in_off;
              for (std::size_t p = 0; p < hw; ++p) acc += go[p] * src[p];
              gw[o * cin + i] += acc;
            }
          }
        }
      }
    });
  }
  return out;
}

/// Depthwise K x K convolution with zero padding K/2 (spatial size kept).
/// weight is [C_out, 1, K, K]; output channel o reads input channel o / m
/// with multiplier m = ceil(C_out / C_in), so C_out = C_in is the classic
/// depthwise case and C_out < m * C_in is a truncated multiplier.
template <std::floating_point T>
Tensor<T> conv2d_depthwise(const Tensor<T>& x, const Tensor<T>& weight) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::expect_dim("conv2d_depthwise", "weight group-channel", ws.c, 1);
  if (ws.h != ws.w) throw ConfigError("conv2d_depthwise: kernel must be square");
  if (ws.h % 2 == 0) {
    throw ConfigError("conv2d_depthwise: kernel size must be odd, got " + std::to_string(ws.h));
  }
  if (xs.c == 0 || ws.n == 0) throw DimensionError("conv2d_depthwise: zero channels");
  const std::size_t k = ws.h, pad = k / 2, cout = ws.n;
  const std::size_t mult = (cout + xs.c - 1) / xs.c;
  const Shape os{xs.n, cout, xs.h, xs.w};
  Tensor<T> out(os);

  auto sweep = [xs, k, pad, cout, mult](auto&& body) {
    const std::size_t hw = xs.plane();
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        const std::size_t out_base = (b * cout + o) * hw;
        const std::size_t in_base = (b * xs.c + o / mult) * hw;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t ylo, yhi;
          detail::valid_range(static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad), 1,
                              xs.h, xs.h, ylo, yhi);
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t xlo, xhi;
            detail::valid_range(static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad), 1,
                                xs.w, xs.w, xlo, xhi);
            const std::size_t widx = (o * k + ky) * k + kx;
            for (std::size_t oy = ylo; oy < yhi; ++oy) {
              const std::size_t row_out = out_base + oy * xs.w;
              const std::size_t row_in = in_base + (oy + ky - pad) * xs.w + kx - pad;
              body(row_out, row_in, xlo, xhi, widx);
            }
          }
        }
      }
    }
  };

  {
    T* po = out.mutable_data().data();
    const T* px = x.data().data();
    const T* pw = weight.data().data();
    sweep([&](std::size_t ro, std::size_t ri, std::size_t lo, std::size_t hi, std::size_t wi) {
      const T wv = pw[wi];
      for (std::size_t ox = lo; ox < hi; ++ox) po[ro + ox] += wv * px[ri + ox];
    });
    MacCounter::add(static_cast<std::uint64_t>(xs.n) * cout * k * k * xs.h * xs.w);
  }

  if (auto* tape = detail::recording_tape({&x, &weight})) {
    out.set_requires_grad(true);
    auto xn = x.node(), wn = weight.node(), on = out.node();
    tape->record({xn, wn}, on, [xn, wn, on, sweep] {
      const T* g = on->grad.data();
      const T* px = xn->value.data();
      const T* pw = wn->value.data();
      T* gx = xn->requires_grad ? xn->ensure_grad() : nullptr;
      T* gw = wn->requires_grad ? wn->ensure_grad() : nullptr;
      sweep([&](std::size_t ro, std::size_t ri, std::size_t lo, std::size_t hi, std::size_t wi) {
        if (gx) {
          const T wv = pw[wi];
          for (std::size_t ox = lo; ox < hi; ++ox) gx[ri + ox] += wv * g[ro + ox];
        }
        if (gw) {
          T acc{0};
          for (std::size_t ox = lo; ox < hi; ++ox) acc += g[ro + ox] * px[ri + ox];
          gw[wi] += acc;
        }
      });
    });
  }
  return out;
}

/// Running statistics of a batch-norm layer, shape [1, C, 1, 1] each.
template <std::floating_point T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  static BatchNormState make(std::size_t channels) {
    return {Tensor<T>(Shape{1, channels, 1, 1}, T{0}), Tensor<T>(Shape{1, channels, 1, 1}, T{1})};
  }
};

/// Per-channel batch normalisation over (B, H, W). Train mode normalises
/// with batch statistics and folds them into the running estimates
/// (unbiased variance, momentum 0.1); eval mode uses the running estimates.
template <std::floating_point T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, Mode mode) {
  const Shape xs = x.shape();
  const std::size_t c = xs.c, hw = xs.plane();
  detail::expect_dim("batchnorm2d", "gamma channel", gamma.shape().c, c);
  detail::expect_dim("batchnorm2d", "beta channel", beta.shape().c, c);
  detail::expect_dim("batchnorm2d", "running-stat channel", state.running_mean.shape().c, c);
  const std::size_t count = xs.n * hw;
  if (count == 0) throw DimensionError("batchnorm2d: empty input");

  std::vector<T> mean(c), inv_std(c);
  const T* px = x.data().data();
  if (mode == Mode::train) {
    T* rm = state.running_mean.mutable_data().data();
    T* rv = state.running_var.mutable_data().data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < xs.n; ++b) {
        const T* src = px + (b * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) s += src[p];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < xs.n; ++b) {
        const T* src = px + (b * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
          const double d = src[p] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(count);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      rm[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * rm[ch] + kBatchNormMomentum * mu);
      rv[ch] = static_cast<T>((1.0 - kBatchNormMomentum) * rv[ch] + kBatchNormMomentum * unbiased);
    }
  } else {
    const auto rm = state.running_mean.data();
    const auto rv = state.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[ch]) + kBatchNormEps));
    }
  }

  Tensor<T> out(xs);
  std::vector<T> xhat(xs.numel());
  {
    T* po = out.mutable_data().data();
    const T* pg = gamma.data().data();
    const T* pb = beta.data().data();
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * hw;
        for (std::size_t p = 0; p < hw; ++p) {
          const T xh = (px[base + p] - mean[ch]) * inv_std[ch];
          xhat[base + p] = xh;
          po[base + p] = pg[ch] * xh + pb[ch];
        }
      }
    }
  }

  if (auto* tape = detail::recording_tape({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    tape->record({xn, gn, bn}, on,
                 [xn, gn, bn, on, xs, mode, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const std::size_t c = xs.c, hw = xs.plane();
      const T* g = on->grad.data();
      const T* pg = gn->value.data();
      T* gx = xn->requires_grad ? xn->ensure_grad() : nullptr;
      T* ggam = gn->requires_grad ? gn->ensure_grad() : nullptr;
      T* gbet = bn->requires_grad ? bn->ensure_grad() : nullptr;
      const double count = static_cast<double>(xs.n * hw);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < xs.n; ++b) {
          const std::size_t base = (b * c + ch) * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            sum_g += g[base + p];
            sum_gx += static_cast<double>(g[base + p]) * xhat[base + p];
          }
        }
        if (ggam) ggam[ch] += static_cast<T>(sum_gx);
        if (gbet) gbet[ch] += static_cast<T>(sum_g);
        if (!gx) continue;
        const T scale = pg[ch] * inv_std[ch];
        if (mode == Mode::train) {
          const T mean_g = static_cast<T>(sum_g / count);
          const T mean_gx = static_cast<T>(sum_gx / count);
          for (std::size_t b = 0; b < xs.n; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) {
              gx[base + p] += scale * (g[base + p] - mean_g - xhat[base + p] * mean_gx);
            }
          }
        } else {
          for (std::size_t b = 0; b < xs.n; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t p = 0; p < hw; ++p) gx[base + p] += scale * g[base + p];
          }
        }
      }
    });
  }
  return out;
}

namespace detail {

template <std::floating_point T, class Fwd, class Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  {
    auto src = x.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fwd(src[i]);
  }
  if (auto* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, deriv] {
      T* gx = xn->ensure_grad();
      const T* g = on->grad.data();
      for (std::size_t i = 0; i < on->value.size(); ++i) {
        gx[i] += g[i] * deriv(xn->value[i], on->value[i]);
      }
    });
  }
  return out;
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T in, T) { return in > T{0} ? T{1} : T{0}; });
}

template <std::floating_point T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return T{1} / (T{1} + std::exp(-v)); },
      [](T, T out) { return out * (T{1} - out); });
}

/// Bilinear resize with half-pixel centres (align_corners = false):
/// src = (dst + 0.5) * in / out - 0.5, clamped at the low border.
/// Costs 4 MACs per output element in the accounting.
template <std::floating_point T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  const Shape xs = x.shape();
  if (out_h == 0 || out_w == 0) throw ConfigError("upsample_bilinear: zero target size");
  if (out_h < xs.h || out_w < xs.w) {
    throw ConfigError("upsample_bilinear: target " + std::to_string(out_h) + "x" +
                      std::to_string(out_w) + " smaller than input");
  }
  struct Tap {
    std::size_t i0, i1;
    T frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      auto i0 = static_cast<std::size_t>(src);
      if (i0 > in - 1) i0 = in - 1;
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[d] = {i0, i1, static_cast<T>(src - static_cast<double>(i0))};
    }
    return t;
  };
  const std::vector<Tap> ty = taps(xs.h, out_h);
  const std::vector<Tap> tx = taps(xs.w, out_w);
  const Shape os{xs.n, xs.c, out_h, out_w};
  Tensor<T> out(os);
  {
    const T* px = x.data().data();
    T* po = out.mutable_data().data();
    for (std::size_t plane = 0; plane < xs.n * xs.c; ++plane) {
      const T* src = px + plane * xs.plane();
      T* dst = po + plane * os.plane();
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const T* r0 = src + ty[oy].i0 * xs.w;
        const T* r1 = src + ty[oy].i1 * xs.w;
        const T ly = ty[oy].frac;
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const Tap& t = tx[ox];
          // Lerp form keeps constant inputs exact.
          const T top = r0[t.i0] + t.frac * (r0[t.i1] - r0[t.i0]);
          const T bot = r1[t.i0] + t.frac * (r1[t.i1] - r1[t.i0]);
          dst[oy * out_w + ox] = top + ly * (bot - top);
        }
      }
    }
    MacCounter::add(4ull * os.numel());
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, xs, os, ty, tx] {
      T* gx = xn->ensure_grad();
      const T* g = on->grad.data();
      for (std::size_t plane = 0; plane < xs.n * xs.c; ++plane) {
        T* dst = gx + plane * xs.plane();
        const T* go = g + plane * os.plane();
        for (std::size_t oy = 0; oy < os.h; ++oy) {
          const T ly = ty[oy].frac;
          T* r0 = dst + ty[oy].i0 * xs.w;
          T* r1 = dst + ty[oy].i1 * xs.w;
          for (std::size_t ox = 0; ox < os.w; ++ox) {
            const auto& t = tx[ox];
            const T gv = go[oy * os.w + ox];
            const T gtop = gv * (T{1} - ly), gbot = gv * ly;
            r0[t.i0] += gtop * (T{1} - t.frac);
            r0[t.i1] += gtop * t.frac;
            r1[t.i0] += gbot * (T{1} - t.frac);
            r1[t.i1] += gbot * t.frac;
          }
        }
      }
    });
  }
  return out;
}

/// Stacks tensors along the channel axis in argument order.
template <std::floating_point T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs) {
  if (xs.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape first = xs[0].shape();
  std::size_t total_c = 0;
  for (const auto& t : xs) {
    detail::expect_dim("concat_channels", "batch", t.shape().n, first.n);
    detail::expect_dim("concat_channels", "height", t.shape().h, first.h);
    detail::expect_dim("concat_channels", "width", t.shape().w, first.w);
    total_c += t.shape().c;
  }
  const Shape os{first.n, total_c, first.h, first.w};
  const std::size_t hw = first.plane();
  Tensor<T> out(os);
  {
    T* po = out.mutable_data().data();
    for (std::size_t b = 0; b < first.n; ++b) {
      std::size_t c_off = 0;
      for (const auto& t : xs) {
        const std::size_t block = t.shape().c * hw;
        const T* src = t.data().data() + b * block;
        std::copy(src, src + block, po + (b * total_c + c_off) * hw);
        c_off += t.shape().c;
      }
    }
  }
  GradTape<T>* tape = GradTape<T>::current();
  const bool any = std::any_of(xs.begin(), xs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
  if (tape && any) {
    out.set_requires_grad(true);
    std::vector<typename Tensor<T>::NodePtr> nodes;
    for (const auto& t : xs) nodes.push_back(t.node());
    auto on = out.node();
    tape->record(nodes, on, [nodes, on, os, hw] {
      const T* g = on->grad.data();
      for (std::size_t b = 0; b < os.n; ++b) {
        std::size_t c_off = 0;
        for (const auto& n : nodes) {
          const std::size_t block = n->shape.c * hw;
          if (n->requires_grad) {
            T* dst = n->ensure_grad() + b * block;
            const T* src = g + (b * os.c + c_off) * hw;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
          c_off += n->shape.c;
        }
      }
    });
  }
  return out;
}

template <std::floating_point T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> xs) {
  return concat_channels(std::span<const Tensor<T>>(xs.begin(), xs.size()));
}

/// Output channel j*G + g reads input channel g*(C/G) + j: view channels as
/// a (G, C/G) grid, transpose, flatten. Shuffling with C/G groups inverts it.
template <std::floating_point T>
Tensor<T> channel_shuffle(const Tensor<T>& x, std::size_t groups) {
  const Shape xs = x.shape();
  if (groups == 0 || xs.c % groups != 0) {
    throw ConfigError("channel_shuffle: " + std::to_string(xs.c) +
                      " channels not divisible into " + std::to_string(groups) + " groups");
  }
  const std::size_t per = xs.c / groups, hw = xs.plane();
  std::vector<std::size_t> source(xs.c);
  for (std::size_t j = 0; j < per; ++j) {
    for (std::size_t g = 0; g < groups; ++g) source[j * groups + g] = g * per + j;
  }
  Tensor<T> out(xs);
  {
    const T* px = x.data().data();
    T* po = out.mutable_data().data();
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t c = 0; c < xs.c; ++c) {
        const T* src = px + (b * xs.c + source[c]) * hw;
        std::copy(src, src + hw, po + (b * xs.c + c) * hw);
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, xs, hw, source] {
      T* gx = xn->ensure_grad();
      const T* g = on->grad.data();
      for (std::size_t b = 0; b < xs.n; ++b) {
        for (std::size_t c = 0; c < xs.c; ++c) {
          T* dst = gx + (b * xs.c + source[c]) * hw;
          const T* src = g + (b * xs.c + c) * hw;
          for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
        }
      }
    });
  }
  return out;
}

/// Mean over (C/G, H, W) for each of G channel groups -> [B, G, 1, 1].
template <std::floating_point T>
Tensor<T> global_avgpool_per_group(const Tensor<T>& x, std::size_t groups) {
  const Shape xs = x.shape();
  if (groups == 0 || xs.c % groups != 0) {
    throw ConfigError("global_avgpool_per_group: " + std::to_string(xs.c) +
                      " channels not divisible into " + std::to_string(groups) + " groups");
  }
  const std::size_t block = xs.c / groups * xs.plane();
  Tensor<T> out(Shape{xs.n, groups, 1, 1});
  {
    const T* px = x.data().data();
    T* po = out.mutable_data().data();
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t g = 0; g < groups; ++g) {
        const T* src = px + (b * groups + g) * block;
        double s = 0.0;
        for (std::size_t i = 0; i < block; ++i) s += src[i];
        po[b * groups + g] = static_cast<T>(s / static_cast<double>(block));
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, xs, groups, block] {
      T* gx = xn->ensure_grad();
      const T inv = T{1} / static_cast<T>(block);
      for (std::size_t b = 0; b < xs.n; ++b) {
        for (std::size_t g = 0; g < groups; ++g) {
          const T gv = on->grad[b * groups + g] * inv;
          T* dst = gx + (b * groups + g) * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += gv;
        }
      }
    });
  }
  return out;
}

/// Fully connected layer on per-sample vectors stored as [B, F_in, 1, 1].
/// weight [F_out, F_in, 1, 1], bias [1, F_out, 1, 1].
template <std::floating_point T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  detail::expect_dim("linear", "input height", xs.h, 1);
  detail::expect_dim("linear", "input width", xs.w, 1);
  detail::expect_dim("linear", "weight input-feature", ws.c, xs.c);
  detail::expect_dim("linear", "bias feature", bias.shape().c, ws.n);
  const std::size_t fin = xs.c, fout = ws.n;
  Tensor<T> out(Shape{xs.n, fout, 1, 1});
  {
    const T* px = x.data().data();
    const T* pw = weight.data().data();
    const T* pb = bias.data().data();
    T* po = out.mutable_data().data();
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t o = 0; o < fout; ++o) {
        T acc = pb[o];
        for (std::size_t i = 0; i < fin; ++i) acc += pw[o * fin + i] * px[b * fin + i];
        po[b * fout + o] = acc;
      }
      MacCounter::add(fin * fout);
    }
  }
  if (auto* tape = detail::recording_tape({&x, &weight, &bias})) {
    out.set_requires_grad(true);
    auto xn = x.node(), wn = weight.node(), bn = bias.node(), on = out.node();
    tape->record({xn, wn, bn}, on, [xn, wn, bn, on, xs, fin, fout] {
      const T* g = on->grad.data();
      T* gx = xn->requires_grad ? xn->ensure_grad() : nullptr;
      T* gw = wn->requires_grad ? wn->ensure_grad() : nullptr;
      T* gb = bn->requires_grad ? bn->ensure_grad() : nullptr;
      for (std::size_t b = 0; b < xs.n; ++b) {
        for (std::size_t o = 0; o < fout; ++o) {
          const T gv = g[b * fout + o];
          if (gb) gb[o] += gv;
          for (std::size_t i = 0; i < fin; ++i) {
            if (gx) gx[b * fin + i] += wn->value[o * fin + i] * gv;
            if (gw) gw[o * fin + i] += gv * xn->value[b * fin + i];
          }
        }
      }
    });
  }
  return out;
}

/// Multiplies every channel of group g by scale[b, g] (scale batch size 1
/// broadcasts over the batch).
template <std::floating_point T>
Tensor<T> scale_groups(const Tensor<T>& x, const Tensor<T>& scale) {
  const Shape xs = x.shape();
  const Shape ss = scale.shape();
  const std::size_t groups = ss.c;
  if (groups == 0 || xs.c % groups != 0) {
    throw DimensionError("scale_groups: channel axis " + std::to_string(xs.c) +
                         " not divisible by " + std::to_string(groups) + " groups");
  }
  if (ss.n != 1 && ss.n != xs.n) {
    throw DimensionError("scale_groups: batch axis of scale is " + std::to_string(ss.n) +
                         ", expected 1 or " + std::to_string(xs.n));
  }
  detail::expect_dim("scale_groups", "scale height", ss.h, 1);
  detail::expect_dim("scale_groups", "scale width", ss.w, 1);
  const std::size_t block = xs.c / groups * xs.plane();
  const bool per_sample = ss.n == xs.n;
  Tensor<T> out(xs);
  {
    const T* px = x.data().data();
    const T* ps = scale.data().data();
    T* po = out.mutable_data().data();
    for (std::size_t b = 0; b < xs.n; ++b) {
      for (std::size_t g = 0; g < groups; ++g) {
        const T s = ps[(per_sample ? b : 0) * groups + g];
        const std::size_t base = (b * groups + g) * block;
        for (std::size_t i = 0; i < block; ++i) po[base + i] = px[base + i] * s;
      }
    }
  }
  if (auto* tape = detail::recording_tape({&x, &scale})) {
    out.set_requires_grad(true);
    auto xn = x.node(), sn = scale.node(), on = out.node();
    tape->record({xn, sn}, on, [xn, sn, on, xs, groups, block, per_sample] {
      const T* g = on->grad.data();
      T* gx = xn->requires_grad ? xn->ensure_grad() : nullptr;
      T* gs = sn->requires_grad ? sn->ensure_grad() : nullptr;
      for (std::size_t b = 0; b < xs.n; ++b) {
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t si = (per_sample ? b : 0) * groups + gi;
          const T s = sn->value[si];
          const std::size_t base = (b * groups + gi) * block;
          T acc{0};
          for (std::size_t i = 0; i < block; ++i) {
            if (gx) gx[base + i] += g[base + i] * s;
            acc += g[base + i] * xn->value[base + i];
          }
          if (gs) gs[si] += acc;
        }
      }
    });
  }
  return out;
}

template <std::floating_point T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::expect_same_shape("add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  {
    auto pa = a.data(), pb = b.data();
    auto po = out.mutable_data();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
  }
  if (auto* tape = detail::recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record({an, bn}, on, [an, bn, on] {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        T* gd = n->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) gd[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <std::floating_point T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::expect_same_shape("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  {
    auto pa = a.data(), pb = b.data();
    auto po = out.mutable_data();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] * pb[i];
  }
  if (auto* tape = detail::recording_tape({&a, &b})) {
    out.set_requires_grad(true);
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record({an, bn}, on, [an, bn, on] {
      const std::size_t n = on->grad.size();
      if (an->requires_grad) {
        T* ga = an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        T* gb = bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gb[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

namespace detail {

template <std::floating_point T>
Tensor<T> reduce_scaled(const Tensor<T>& x, double factor) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s * factor));
  if (auto* tape = recording_tape({&x})) {
    out.set_requires_grad(true);
    auto xn = x.node(), on = out.node();
    tape->record({xn}, on, [xn, on, factor] {
      T* gx = xn->ensure_grad();
      const T gv = static_cast<T>(on->grad[0] * factor);
      for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += gv;
    });
  }
  return out;
}

}  // namespace detail

template <std::floating_point T>
Tensor<T> sum(const Tensor<T>& x) {
  return detail::reduce_scaled(x, 1.0);
}

template <std::floating_point T>
Tensor<T> mean(const Tensor<T>& x) {
  return detail::reduce_scaled(x, 1.0 / static_cast<double>(x.numel()));
}

}  // namespace depthpolyp
