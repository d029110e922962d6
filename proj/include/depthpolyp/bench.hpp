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

// Batch-1 forward-pass throughput timing.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <vector>

#include "depthpolyp/network.hpp"
#include "depthpolyp/rng.hpp"

namespace depthpolyp {

struct BenchResult {
  std::size_t input_size = 0;
  std::size_t iters = 0;
  double mean_fps = 0.0;
  double std_fps = 0.0;
  std::vector<double> seconds;  // per timed iteration

  double cv() const { return mean_fps > 0.0 ? std_fps / mean_fps : 0.0; }
};

/// Times `iters` eval-mode forward passes on a fixed random 1x3xSxS input
/// after `warmup` untimed passes. FPS statistics are over per-iteration
/// rates 1 / t_i, std with n - 1.
template <std::floating_point T>
BenchResult bench_fps(DepthPolyp<T>& model, std::size_t input_size, std::size_t warmup = 10, std::size_t iters = 100) {
  if (iters < 10) throw UsageError("bench: iters must be >= 10, got " + std::to_string(iters));
  model.config().validate_input(input_size, input_size);
  Rng rng(0x62656e6368ull);
  std::vector<T> pixels(3 * input_size * input_size);
  for (auto& v : pixels) v = static_cast<T>(rng.uniform());
  const Tensor<T> x(Shape{1, 3, input_size, input_size}, std::move(pixels));
  for (std::size_t i = 0; i < warmup; ++i) model.forward(x, Mode::eval);

  BenchResult r;
  r.input_size = input_size;
  r.iters = iters;
  std::vector<double> fps;
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.forward(x, Mode::eval);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.seconds.push_back(s);
    fps.push_back(1.0 / std::max(s, 1e-12));
  }
  for (double f : fps) r.mean_fps += f;
  r.mean_fps /= static_cast<double>(iters);
  double ss = 0.0;
  for (double f : fps) ss += (f - r.mean_fps) * (f - r.mean_fps);
  r.std_fps = std::sqrt(ss / static_cast<double>(iters - 1));
  return r;
}

}  // namespace depthpolyp
