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

// AdamW with decoupled weight decay and a linear-warmup / cosine-decay
// learning-rate schedule.

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "depthpolyp/layers.hpp"

namespace depthpolyp {

/// Linear ramp 0 -> peak over the first `warmup_fraction` of the run, then
/// cosine decay peak -> 0 at `total_steps`.
struct LrSchedule {
  double peak = 1e-4;
  std::size_t total_steps = 1;
  double warmup_fraction = 0.1;

  double warmup_steps() const { return warmup_fraction * static_cast<double>(total_steps); }

  double operator()(double t) const {
    const double total = static_cast<double>(total_steps);
    const double warm = warmup_steps();
    if (t <= 0.0) return 0.0;
    if (t >= total) return 0.0;
    if (t <= warm) return peak * t / warm;
    const double progress = (t - warm) / (total - warm);
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
};

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <std::floating_point T>
class AdamW {
 public:
  /// Without a schedule the learning rate is constant at `config.lr`.
  AdamW(std::vector<NamedTensor<T>> params, AdamWConfig config)
      : params_(std::move(params)), config_(config) {
    init_moments();
  }

  AdamW(std::vector<NamedTensor<T>> params, AdamWConfig config, LrSchedule schedule)
      : params_(std::move(params)), config_(config), schedule_(schedule), scheduled_(true) {
    schedule_.peak = config_.lr;
    init_moments();
  }

  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

  /// Learning rate used by the next call to step().
  double current_lr() const {
    return scheduled_ ? schedule_(static_cast<double>(step_ + 1)) : config_.lr;
  }

  /// Applies one update from the accumulated grads. Parameters with no grad
  /// are treated as having a zero gradient. Throws TrainingError naming the
  /// parameter if any gradient entry is not finite; no parameter is touched
  /// in that case.
  void step() {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      auto g = p.tensor.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(static_cast<double>(g[i]))) {
          throw TrainingError("non-finite gradient in " + p.name + "[" + std::to_string(i) +
                              "] at step " + std::to_string(step_ + 1));
        }
      }
    }
    const double lr = current_lr();
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      auto values = p.tensor.mutable_data();
      const bool has_grad = p.tensor.has_grad();
      const double decay = p.decay ? 1.0 - lr * config_.weight_decay : 1.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = has_grad ? static_cast<double>(p.tensor.grad()[i]) : 0.0;
        double& m = m_[k][i];
        double& v = v_[k][i];
        m = config_.beta1 * m + (1.0 - config_.beta1) * g;
        v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
        const double update = (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
        values[i] = static_cast<T>(static_cast<double>(values[i]) * decay - lr * update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  void init_moments() {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  std::vector<NamedTensor<T>> params_;
  AdamWConfig config_;
  LrSchedule schedule_;
  bool scheduled_ = false;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace depthpolyp
