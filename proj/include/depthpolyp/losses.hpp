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

// Training objectives: Dice segmentation loss, Smooth-L1 depth loss and the
// uncertainty-weighted joint loss in log-variance form.

#pragma once

#include <cmath>
#include <string>

#include "depthpolyp/layers.hpp"

namespace depthpolyp {

inline constexpr double kDiceEps = 1e-6;
inline constexpr double kSmoothL1Beta = 1.0;

/// Learnable log-variances s = log(sigma^2) for the two tasks, both
/// starting at 0 (sigma = 1).
template <std::floating_point T>
struct LossState {
  Tensor<T> s_seg = Tensor<T>::scalar(T{0});
  Tensor<T> s_depth = Tensor<T>::scalar(T{0});
  double dice_eps = kDiceEps;
  double smoothl1_beta = kSmoothL1Beta;

  LossState() {
    s_seg.set_requires_grad(true);
    s_depth.set_requires_grad(true);
  }

  /// exp(-s) / 2 for each task.
  double seg_weight() const { return 0.5 * std::exp(-static_cast<double>(s_seg.item())); }
  double depth_weight() const { return 0.5 * std::exp(-static_cast<double>(s_depth.item())); }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.add_parameter(join_name(prefix, "s_seg"), s_seg, false);
    set.add_parameter(join_name(prefix, "s_depth"), s_depth, false);
  }
};

/// 1 - (2 sum(p y) + eps) / (sum(p) + sum(y) + eps), reduced over the whole
/// batch. `target` must be {0, 1}-valued.
template <std::floating_point T>
Tensor<T> dice_loss(const Tensor<T>& prob, const Tensor<T>& target, double eps = kDiceEps) {
  detail::expect_same_shape("dice_loss", prob.shape(), target.shape());
  auto p = prob.data();
  auto y = target.data();
  double inter = 0.0, sum_p = 0.0, sum_y = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != T{0} && y[i] != T{1}) {
      throw DataError("dice_loss: mask value " + std::to_string(y[i]) + " at index " +
                      std::to_string(i) + " is not 0 or 1");
    }
    inter += static_cast<double>(p[i]) * y[i];
    sum_p += p[i];
    sum_y += y[i];
  }
  const double num = 2.0 * inter + eps;
  const double den = sum_p + sum_y + eps;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(1.0 - num / den));
  if (auto* tape = detail::recording_tape({&prob})) {
    out.set_requires_grad(true);
    auto pn = prob.node(), yn = target.node(), on = out.node();
    tape->record({pn}, on, [pn, yn, on, num, den] {
      T* gp = pn->ensure_grad();
      const double g = on->grad[0];
      const double inv_den2 = 1.0 / (den * den);
      for (std::size_t i = 0; i < pn->value.size(); ++i) {
        gp[i] += static_cast<T>(-g * (2.0 * yn->value[i] * den - num) * inv_den2);
      }
    });
  }
  return out;
}

/// Mean Huber-style loss: 0.5 r^2 / beta for |r| < beta, |r| - beta / 2 otherwise.
template <std::floating_point T>
Tensor<T> smooth_l1(const Tensor<T>& pred, const Tensor<T>& target, double beta = kSmoothL1Beta) {
  detail::expect_same_shape("smooth_l1", pred.shape(), target.shape());
  auto d = pred.data();
  auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = static_cast<double>(d[i]) - t[i];
    const double a = std::abs(r);
    acc += a < beta ? 0.5 * r * r / beta : a - 0.5 * beta;
  }
  const double n = static_cast<double>(d.size());
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / n));
  if (auto* tape = detail::recording_tape({&pred, &target})) {
    out.set_requires_grad(true);
    auto dn = pred.node(), tn = target.node(), on = out.node();
    tape->record({dn, tn}, on, [dn, tn, on, beta, n] {
      const double g = on->grad[0] / n;
      T* gd = dn->requires_grad ? dn->ensure_grad() : nullptr;
      T* gt = tn->requires_grad ? tn->ensure_grad() : nullptr;
      for (std::size_t i = 0; i < dn->value.size(); ++i) {
        const double r = static_cast<double>(dn->value[i]) - tn->value[i];
        const double dr = std::abs(r) < beta ? r / beta : (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0));
        if (gd) gd[i] += static_cast<T>(g * dr);
        if (gt) gt[i] -= static_cast<T>(g * dr);
      }
    });
  }
  return out;
}

/// 0.5 e^{-s_s} L_seg + 0.5 s_s + w (0.5 e^{-s_d} L_depth + 0.5 s_d), the
/// log-variance form of inverse-variance task weighting. `depth_weight` = 0
/// drops the depth task entirely (ablation switch).
template <std::floating_point T>
Tensor<T> joint_loss(const LossState<T>& state, const Tensor<T>& seg_loss,
                     const Tensor<T>& depth_loss, double depth_weight = 1.0) {
  const double ls = seg_loss.item();
  const double ld = depth_loss.item();
  if (!std::isfinite(ls) || !std::isfinite(ld)) {
    throw TrainingError("joint_loss: non-finite component (L_seg=" + std::to_string(ls) +
                        ", L_depth=" + std::to_string(ld) + ")");
  }
  const double ss = state.s_seg.item();
  const double sd = state.s_depth.item();
  const double ws = 0.5 * std::exp(-ss);
  const double wd = 0.5 * std::exp(-sd);
  const double value = ws * ls + 0.5 * ss + depth_weight * (wd * ld + 0.5 * sd);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(value));
  if (auto* tape = detail::recording_tape({&seg_loss, &depth_loss, &state.s_seg, &state.s_depth})) {
    out.set_requires_grad(true);
    auto lsn = seg_loss.node(), ldn = depth_loss.node();
    auto ssn = state.s_seg.node(), sdn = state.s_depth.node(), on = out.node();
    tape->record({lsn, ldn, ssn, sdn}, on, [=] {
      const double g = on->grad[0];
      if (lsn->requires_grad) lsn->ensure_grad()[0] += static_cast<T>(g * ws);
      if (ldn->requires_grad) ldn->ensure_grad()[0] += static_cast<T>(g * depth_weight * wd);
      if (ssn->requires_grad) ssn->ensure_grad()[0] += static_cast<T>(g * (-ws * ls + 0.5));
      if (sdn->requires_grad) {
        sdn->ensure_grad()[0] += static_cast<T>(g * depth_weight * (-wd * ld + 0.5));
      }
    });
  }
  return out;
}

}  // namespace depthpolyp
