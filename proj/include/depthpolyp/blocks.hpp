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

// Decoder building blocks: Ghost factorisation (GFM), interleaved shuffle
// fusion (ISF) and dynamic group gating (DGG).

#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include "depthpolyp/layers.hpp"

namespace depthpolyp {

struct GfmConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t split_ratio = 2;
  std::size_t dw_kernel = 3;

  std::size_t primary_channels() const { return split_ratio == 0 ? 0 : out_channels / split_ratio; }
  std::size_t auxiliary_channels() const { return out_channels - primary_channels(); }
  /// Depthwise channel multiplier needed to reach C_a from C_p.
  std::size_t multiplier() const {
    const std::size_t cp = primary_channels();
    return cp == 0 ? 0 : (auxiliary_channels() + cp - 1) / cp;
  }

  void validate() const {
    if (in_channels == 0) throw ConfigError("GFM: in_channels must be positive");
    if (split_ratio == 0) throw ConfigError("GFM: split ratio must be positive");
    if (primary_channels() < 1) {
      throw ConfigError("GFM: C_p = floor(" + std::to_string(out_channels) + "/" +
                        std::to_string(split_ratio) + ") must be >= 1");
    }
    if (out_channels <= primary_channels()) throw ConfigError("GFM: C_a must be >= 1");
    if (dw_kernel % 2 == 0) throw ConfigError("GFM: depthwise kernel must be odd");
  }
};

struct IsfConfig {
  std::size_t channels = 0;
  std::size_t groups = 4;
  std::size_t dw_kernel = 3;

  void validate() const {
    if (groups == 0 || channels == 0 || channels % groups != 0) {
      throw ConfigError("ISF: " + std::to_string(channels) + " channels not divisible into " +
                        std::to_string(groups) + " groups");
    }
    if (dw_kernel % 2 == 0) throw ConfigError("ISF: depthwise kernel must be odd");
  }
};

struct DggConfig {
  std::size_t channels = 0;
  std::size_t groups = 4;

  std::size_t group_channels() const { return channels / groups; }

  void validate() const {
    if (groups == 0 || channels == 0 || channels % groups != 0) {
      throw ConfigError("DGG: " + std::to_string(channels) + " channels not divisible into " +
                        std::to_string(groups) + " groups");
    }
  }
};

/// Ghost factorisation: a pointwise primary stream X_p = ReLU(BN(PW(X)))
/// and a cheap auxiliary stream X_a = ReLU(BN(DW(X_p))).
///
/// When C_a != C_p the depthwise stage runs with multiplier ceil(C_a / C_p)
/// and keeps only the first C_a output channels, so only C_a kernels exist.
template <std::floating_point T>
class Gfm {
 public:
  struct Output {
    Tensor<T> primary;
    Tensor<T> auxiliary;
  };

  Gfm(GfmConfig cfg, Rng& rng)
      : cfg_((cfg.validate(), cfg)),
        pw_weight(he_normal<T>(Shape{cfg.primary_channels(), cfg.in_channels, 1, 1}, cfg.in_channels, rng)),
        pw_bn(cfg.primary_channels()),
        dw_weight(he_normal<T>(Shape{cfg.auxiliary_channels(), 1, cfg.dw_kernel, cfg.dw_kernel},
                               cfg.dw_kernel * cfg.dw_kernel, rng)),
        dw_bn(cfg.auxiliary_channels()) {}

  Output forward(const Tensor<T>& x, Mode mode) {
    detail::expect_dim("GFM", "channel", x.shape().c, cfg_.in_channels);
    Tensor<T> primary = relu(pw_bn(conv2d_pointwise(x, pw_weight), mode));
    Tensor<T> auxiliary = relu(dw_bn(conv2d_depthwise(primary, dw_weight), mode));
    return {std::move(primary), std::move(auxiliary)};
  }

  /// [X_p, X_a] as one tensor of C_out channels.
  Tensor<T> forward_concat(const Tensor<T>& x, Mode mode) {
    Output o = forward(x, mode);
    return concat_channels<T>({o.primary, o.auxiliary});
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.add_parameter(join_name(prefix, "pw.weight"), pw_weight);
    pw_bn.collect(join_name(prefix, "pw.bn"), set);
    set.add_parameter(join_name(prefix, "dw.weight"), dw_weight);
    dw_bn.collect(join_name(prefix, "dw.bn"), set);
  }

  const GfmConfig& config() const { return cfg_; }

 private:
  GfmConfig cfg_;

 public:
  Tensor<T> pw_weight;
  BatchNorm<T> pw_bn;
  Tensor<T> dw_weight;
  BatchNorm<T> dw_bn;
};

/// F' = F + expand(gamma) * DW(Shuffle_G(F)). The depthwise conv is bare
/// (no BN, no activation) and gamma starts at zero, so a fresh block is the
/// identity.
template <std::floating_point T>
class Isf {
 public:
  Isf(IsfConfig cfg, Rng& rng)
      : cfg_((cfg.validate(), cfg)),
        dw_weight(he_normal<T>(Shape{cfg.channels, 1, cfg.dw_kernel, cfg.dw_kernel},
                               cfg.dw_kernel * cfg.dw_kernel, rng)),
        gamma(Shape{1, cfg.groups, 1, 1}, T{0}) {}

  Tensor<T> forward(const Tensor<T>& f) {
    detail::expect_dim("ISF", "channel", f.shape().c, cfg_.channels);
    Tensor<T> refined = conv2d_depthwise(channel_shuffle(f, cfg_.groups), dw_weight);
    return add(f, scale_groups(refined, gamma));
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.add_parameter(join_name(prefix, "dw.weight"), dw_weight);
    set.add_parameter(join_name(prefix, "gamma"), gamma);
  }

  const IsfConfig& config() const { return cfg_; }

 private:
  IsfConfig cfg_;

 public:
  Tensor<T> dw_weight;
  Tensor<T> gamma;  // [1, G, 1, 1]
};

/// Group descriptors z = mean over (C_g, H, W); gates w = sigmoid(phi(z));
/// out = x + w (broadcast per group) * x. phi is a zero-initialised G -> G
/// linear map, so fresh gates are all 0.5.
template <std::floating_point T>
class Dgg {
 public:
  explicit Dgg(DggConfig cfg)
      : cfg_((cfg.validate(), cfg)),
        phi_weight(Shape{cfg.groups, cfg.groups, 1, 1}, T{0}),
        phi_bias(Shape{1, cfg.groups, 1, 1}, T{0}) {}

  /// Gates w in (0, 1), shape [B, G, 1, 1].
  Tensor<T> gates(const Tensor<T>& x) const {
    return sigmoid(linear(global_avgpool_per_group(x, cfg_.groups), phi_weight, phi_bias));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    detail::expect_dim("DGG", "channel", x.shape().c, cfg_.channels);
    return add(x, scale_groups(x, gates(x)));
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.add_parameter(join_name(prefix, "phi.weight"), phi_weight);
    set.add_parameter(join_name(prefix, "phi.bias"), phi_bias);
  }

  const DggConfig& config() const { return cfg_; }

 private:
  DggConfig cfg_;

 public:
  Tensor<T> phi_weight;  // [G, G, 1, 1]
  Tensor<T> phi_bias;    // [1, G, 1, 1]
};

}  // namespace depthpolyp
