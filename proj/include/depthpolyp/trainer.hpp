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

// Mini-batch training loop for the joint segmentation + depth objective.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "depthpolyp/dataset.hpp"
#include "depthpolyp/degrade.hpp"
#include "depthpolyp/losses.hpp"
#include "depthpolyp/network.hpp"
#include "depthpolyp/optimizer.hpp"
#include "depthpolyp/quadrant.hpp"

namespace depthpolyp {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  /// Stop after this many optimizer steps; 0 runs all epochs.
  std::size_t max_steps = 0;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double warmup_fraction = 0.1;
  /// Multiplies the depth term of the joint loss; 0 disables depth guidance.
  double depth_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw ConfigError("train.lr and train.weight_decay must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw ConfigError("train.warmup_fraction must lie in [0, 1)");
    if (!(depth_weight >= 0.0)) throw ConfigError("train.depth_weight must be >= 0");
  }
};

struct LogEntry {
  std::size_t step = 0;  // 1-based
  std::size_t epoch = 0;
  double loss = 0.0;
  double seg_loss = 0.0;
  double depth_loss = 0.0;
  double s_seg = 0.0;
  double s_depth = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<LogEntry> log;
  std::size_t steps = 0;
};

namespace detail {

inline constexpr std::uint64_t kShuffleStream = 0x5348554646ull;
inline constexpr std::uint64_t kDegradeSeedSalt = 0x6465677261646500ull;

}  // namespace detail

/// Epoch view size: N for clean training, 2N for noisy training where each
/// sample appears once clean and once freshly degraded.
inline std::size_t epoch_length(std::size_t n, Condition condition) {
  return condition == Condition::noisy ? 2 * n : n;
}

/// Trains `model` in place. Under Condition::noisy, every epoch pairs each
/// sample with a degraded copy drawn from `spec`, keyed by (seed, epoch,
/// sample), so runs are reproducible. Throws TrainingError with the step
/// number on a non-finite loss or gradient.
template <std::floating_point T>
TrainResult train(DepthPolyp<T>& model, const std::vector<Sample>& data, Condition condition,
                  const TrainConfig& cfg, const DegradationSpec& spec = {},
                  const std::function<void(const LogEntry&)>& on_step = {}) {
  cfg.validate();
  spec.validate();
  for (const auto& s : data) {
    if (s.depth.data.empty()) throw DataError("training sample " + s.id + " has no depth target");
  }
  TrainResult result;
  if (data.empty()) return result;
  const std::size_t n = data.size();
  const std::size_t view = epoch_length(n, condition);
  const std::size_t per_epoch = (view + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t total = cfg.epochs * per_epoch;
  if (cfg.max_steps != 0) total = std::min(total, cfg.max_steps);
  if (total == 0) return result;

  AdamW<T> opt(model.parameters().parameters, AdamWConfig{cfg.lr, cfg.weight_decay},
               LrSchedule{cfg.lr, total, cfg.warmup_fraction});
  const std::uint64_t degrade_seed = mix64(cfg.seed ^ detail::kDegradeSeedSalt);
  std::vector<std::size_t> order(view);
  std::vector<Sample> degraded(condition == Condition::noisy ? n : 0);

  for (std::size_t epoch = 0; result.steps < total; ++epoch) {
    if (condition == Condition::noisy) {
      for (std::size_t i = 0; i < n; ++i) degraded[i] = apply_pipeline(spec, data[i], degrade_seed, epoch * n + i).noisy;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(cfg.seed, detail::kShuffleStream, epoch);
    for (std::size_t i = view; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    for (std::size_t b = 0; b < view && result.steps < total; b += cfg.batch_size) {
      std::vector<const Sample*> chunk;
      for (std::size_t k = b; k < std::min(view, b + cfg.batch_size); ++k) {
        chunk.push_back(order[k] < n ? &data[order[k]] : &degraded[order[k] - n]);
      }
      Batch batch = make_batch(chunk);
      LogEntry entry;
      entry.step = result.steps + 1;
      entry.epoch = epoch;
      entry.lr = opt.current_lr();
      try {
        opt.zero_grad();
        GradTape<T> tape;
        typename GradTape<T>::Scope scope(tape);
        ModelOutput<T> out = model.forward(batch.image.template cast<T>(), Mode::train);
        Tensor<T> seg = dice_loss(sigmoid(out.seg_logits), batch.mask.template cast<T>());
        Tensor<T> depth = smooth_l1(out.depth, batch.depth.template cast<T>());
        Tensor<T> loss = joint_loss(model.loss_state(), seg, depth, cfg.depth_weight);
        entry.loss = loss.item();
        entry.seg_loss = seg.item();
        entry.depth_loss = depth.item();
        if (!std::isfinite(entry.loss)) throw TrainingError("joint loss is " + std::to_string(entry.loss));
        tape.backward(loss);
        opt.step();
      } catch (const TrainingError& e) {
        throw TrainingError("step " + std::to_string(entry.step) + " (epoch " + std::to_string(epoch) +
                            ", lr " + std::to_string(entry.lr) + "): " + e.what());
      }
      entry.s_seg = model.loss_state().s_seg.item();
      entry.s_depth = model.loss_state().s_depth.item();
      if (!std::isfinite(entry.s_seg) || !std::isfinite(entry.s_depth)) {
        throw TrainingError("step " + std::to_string(entry.step) + ": uncertainty parameters became non-finite");
      }
      ++result.steps;
      result.log.push_back(entry);
      if (on_step) on_step(entry);
    }
  }
  return result;
}

}  // namespace depthpolyp
