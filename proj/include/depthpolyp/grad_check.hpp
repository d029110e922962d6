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

// Central finite-difference checks of tape gradients, run in double
// precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "depthpolyp/tensor.hpp"

namespace depthpolyp {

inline constexpr double kRelativeErrorFloor = 1e-8;

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = kRelativeErrorFloor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Max relative error between the tape gradient of scalar f at x and the
/// central difference (f(x + h e_i) - f(x - h e_i)) / 2h, over every element.
template <class F>
double grad_check(F&& f, const Tensor<double>& x, double h = 1e-3,
                  double floor = kRelativeErrorFloor) {
  Tensor<double> probe = x.clone();
  probe.set_requires_grad(true);
  {
    GradTape<double> tape;
    typename GradTape<double>::Scope scope(tape);
    Tensor<double> y = f(probe);
    tape.backward(y);
  }
  std::vector<double> analytic(probe.numel(), 0.0);
  if (probe.has_grad()) std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());

  double worst = 0.0;
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f(probe).item();
    values[i] = saved - h;
    const double down = f(probe).item();
    values[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h), floor));
  }
  return worst;
}

/// Same check against a set of parameter leaves that f closes over.
/// `per_tensor` limits how many entries of each leaf are probed (0 = all);
/// the probed entries are drawn with a fixed seed.
template <class F>
double grad_check_params(F&& f, std::vector<Tensor<double>> params, double h = 1e-3,
                         std::size_t per_tensor = 0, unsigned seed = 0,
                         double floor = kRelativeErrorFloor) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    GradTape<double> tape;
    typename GradTape<double>::Scope scope(tape);
    Tensor<double> y = f();
    tape.backward(y);
  }
  std::mt19937 gen(seed);
  double worst = 0.0;
  for (auto& p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<std::size_t> idx(p.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (per_tensor != 0 && per_tensor < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), gen);
      idx.resize(per_tensor);
    }
    auto values = p.mutable_data();
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h), floor));
    }
    p.zero_grad();
  }
  return worst;
}

}  // namespace depthpolyp
