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

// The full segmentation network: strided-conv stand-in encoder, per-scale
// channel unification, three-stage factorised decoder and the two heads.

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "depthpolyp/blocks.hpp"
#include "depthpolyp/losses.hpp"

namespace depthpolyp {

struct NetworkConfig {
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  std::array<std::size_t, 4> encoder_widths{16, 32, 64, 128};
  std::size_t encoder_depth = 1;  // conv-BN-ReLU layers per stage, the first one strided
  std::size_t encoder_kernel = 3;
  std::size_t unified_dim = 64;
  std::size_t split_ratio = 2;
  std::size_t groups = 4;
  std::size_t stage2_width = 32;  // C_out of each stage-II GFM
  std::size_t fused_dim = 64;
  std::size_t dw_kernel = 3;

  GfmConfig stage1_gfm() const { return {unified_dim, unified_dim, split_ratio, dw_kernel}; }
  std::size_t primary_stream_width() const { return 4 * stage1_gfm().primary_channels(); }
  std::size_t auxiliary_stream_width() const { return 4 * stage1_gfm().auxiliary_channels(); }
  GfmConfig stage2_primary_gfm() const {
    return {primary_stream_width(), stage2_width, split_ratio, dw_kernel};
  }
  GfmConfig stage2_auxiliary_gfm() const {
    return {auxiliary_stream_width(), stage2_width, split_ratio, dw_kernel};
  }
  /// Width of [S_S, S_A, A_S, A_A].
  std::size_t stage3_width() const { return 2 * stage2_width; }
  bool has_fusion_projection() const { return stage3_width() != fused_dim; }

  void validate_input(std::size_t h, std::size_t w) const {
    if (h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0) {
      throw ConfigError("input size " + std::to_string(h) + "x" + std::to_string(w) +
                        " must be a positive multiple of 32");
    }
  }

  void validate() const {
    validate_input(input_height, input_width);
    for (std::size_t wdt : encoder_widths) {
      if (wdt == 0) throw ConfigError("encoder widths must be positive");
    }
    if (encoder_depth == 0) throw ConfigError("encoder_depth must be >= 1");
    if (encoder_kernel % 2 == 0) throw ConfigError("encoder_kernel must be odd");
    if (split_ratio == 0 || unified_dim % split_ratio != 0) {
      throw ConfigError("unified_dim " + std::to_string(unified_dim) +
                        " must be divisible by split_ratio " + std::to_string(split_ratio));
    }
    if (groups == 0 || unified_dim % groups != 0) {
      throw ConfigError("unified_dim " + std::to_string(unified_dim) +
                        " must be divisible by groups " + std::to_string(groups));
    }
    stage1_gfm().validate();
    IsfConfig{primary_stream_width(), groups, 3}.validate();
    IsfConfig{auxiliary_stream_width(), groups, 3}.validate();
    stage2_primary_gfm().validate();
    stage2_auxiliary_gfm().validate();
    if (stage3_width() % groups != 0) {
      throw ConfigError("stage-III concat width " + std::to_string(stage3_width()) +
                        " must be divisible by groups " + std::to_string(groups));
    }
    if (fused_dim == 0) throw ConfigError("fused_dim must be positive");
  }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

template <std::floating_point T>
struct ModelOutput {
  Tensor<T> seg_logits;  // [B, 1, H, W]
  Tensor<T> depth;       // [B, 1, H, W], in (0, 1)
};

template <std::floating_point T>
class DepthPolyp {
 public:
  using Features = std::array<Tensor<T>, 4>;

  explicit DepthPolyp(NetworkConfig cfg, std::uint64_t seed = 0) : cfg_((cfg.validate(), cfg)) {
    std::uint64_t stream = 0;
    auto next_rng = [&] { return Rng(seed, 0x4e4554, stream++); };

    const auto& widths = cfg_.encoder_widths;
    const std::size_t k = cfg_.encoder_kernel;
    {
      Rng rng = next_rng();
      stem_.emplace_back(3, widths[0], k, 2, rng);
    }
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t in = s == 0 ? widths[0] : widths[s - 1];
      std::vector<ConvBnRelu<T>> stage;
      for (std::size_t d = 0; d < cfg_.encoder_depth; ++d) {
        Rng rng = next_rng();
        stage.emplace_back(d == 0 ? in : widths[s], widths[s], k, d == 0 ? 2 : 1, rng);
      }
      stages_.push_back(std::move(stage));
    }
    for (std::size_t s = 0; s < 4; ++s) {
      Rng rng = next_rng();
      unify_weight_[s] = he_normal<T>(Shape{cfg_.unified_dim, widths[s], 1, 1}, widths[s], rng);
      unify_weight_[s].set_requires_grad(true);
    }
    for (std::size_t s = 0; s < 4; ++s) {
      Rng rng = next_rng();
      stage1_.emplace_back(cfg_.stage1_gfm(), rng);
    }
    {
      Rng rng = next_rng();
      isf_primary_.emplace_back(IsfConfig{cfg_.primary_stream_width(), cfg_.groups, 3}, rng);
      isf_auxiliary_.emplace_back(IsfConfig{cfg_.auxiliary_stream_width(), cfg_.groups, 3}, rng);
      gfm_primary_.emplace_back(cfg_.stage2_primary_gfm(), rng);
      gfm_auxiliary_.emplace_back(cfg_.stage2_auxiliary_gfm(), rng);
    }
    dgg_.emplace_back(DggConfig{cfg_.stage3_width(), cfg_.groups});
    if (cfg_.has_fusion_projection()) {
      Rng rng = next_rng();
      fusion_weight_ = he_normal<T>(Shape{cfg_.fused_dim, cfg_.stage3_width(), 1, 1},
                                    cfg_.stage3_width(), rng);
      fusion_bn_.emplace_back(cfg_.fused_dim);
    }
    {
      Rng rng = next_rng();
      seg_head_ = he_normal<T>(Shape{1, cfg_.fused_dim, 1, 1}, cfg_.fused_dim, rng);
      depth_head_ = he_normal<T>(Shape{1, cfg_.fused_dim, 1, 1}, cfg_.fused_dim, rng);
    }
    // Registers requires_grad on every parameter.
    (void)parameters();
  }

  DepthPolyp(const DepthPolyp&) = delete;
  DepthPolyp& operator=(const DepthPolyp&) = delete;
  DepthPolyp(DepthPolyp&&) noexcept = default;
  DepthPolyp& operator=(DepthPolyp&&) noexcept = default;

  const NetworkConfig& config() const { return cfg_; }

  /// Four features at strides 4, 8, 16, 32.
  Features encode(const Tensor<T>& image, Mode mode) {
    const Shape s = image.shape();
    detail::expect_dim("encoder", "channel", s.c, 3);
    cfg_.validate_input(s.h, s.w);
    Tensor<T> x = stem_[0](image, mode);
    Features out;
    for (std::size_t st = 0; st < 4; ++st) {
      for (auto& layer : stages_[st]) x = layer(x, mode);
      out[st] = x;
    }
    return out;
  }

  /// 1x1 projection to C_u, then bilinear resize to (out_h, out_w).
  Tensor<T> unify(std::size_t scale, const Tensor<T>& feature, std::size_t out_h,
                  std::size_t out_w) const {
    return upsample_bilinear(conv2d_pointwise(feature, unify_weight_.at(scale)), out_h, out_w);
  }

  /// Stage I: per-scale GFM, streams ordered [S4, S3, S2, S1] / [A4 .. A1].
  /// Stage II: GFM(ISF(stream)) on each stream.
  /// Stage III: DGG([S_S, S_A, A_S, A_A]), projected to fused_dim if needed.
  Tensor<T> decode(const Features& unified, Mode mode) {
    std::vector<Tensor<T>> prim, aux;
    for (std::size_t i = 4; i-- > 0;) {
      auto o = stage1_[i].forward(unified[i], mode);
      prim.push_back(o.primary);
      aux.push_back(o.auxiliary);
    }
    const Tensor<T> s1 = concat_channels(std::span<const Tensor<T>>(prim));
    const Tensor<T> a1 = concat_channels(std::span<const Tensor<T>>(aux));
    auto ss = gfm_primary_[0].forward(isf_primary_[0].forward(s1), mode);
    auto sa = gfm_auxiliary_[0].forward(isf_auxiliary_[0].forward(a1), mode);
    Tensor<T> fused = dgg_[0].forward(concat_channels<T>({ss.primary, sa.primary, ss.auxiliary, sa.auxiliary}));
    if (cfg_.has_fusion_projection()) {
      fused = relu(fusion_bn_[0](conv2d_pointwise(fused, fusion_weight_), mode));
    }
    return fused;
  }

  /// 1x1 conv then bilinear resize to (out_h, out_w); depth goes through a sigmoid.
  ModelOutput<T> heads(const Tensor<T>& fused, std::size_t out_h, std::size_t out_w) const {
    Tensor<T> seg = upsample_bilinear(conv2d_pointwise(fused, seg_head_), out_h, out_w);
    Tensor<T> depth = sigmoid(upsample_bilinear(conv2d_pointwise(fused, depth_head_), out_h, out_w));
    return {std::move(seg), std::move(depth)};
  }

  ModelOutput<T> forward(const Tensor<T>& image, Mode mode) {
    const Shape s = image.shape();
    Features feats = encode(image, mode);
    Features unified;
    for (std::size_t i = 0; i < 4; ++i) unified[i] = unify(i, feats[i], s.h / 4, s.w / 4);
    return heads(decode(unified, mode), s.h, s.w);
  }

  LossState<T>& loss_state() { return loss_; }
  const LossState<T>& loss_state() const { return loss_; }

  /// Every learnable tensor and BN buffer, in a fixed order with unique names.
  ParameterSet<T> parameters() const {
    ParameterSet<T> set;
    stem_[0].collect("encoder.stem", set);
    for (std::size_t st = 0; st < 4; ++st) {
      for (std::size_t d = 0; d < stages_[st].size(); ++d) {
        stages_[st][d].collect("encoder.stage" + std::to_string(st + 1) + "." + std::to_string(d), set);
      }
    }
    for (std::size_t s = 0; s < 4; ++s) {
      set.add_parameter("unify" + std::to_string(s + 1) + ".weight", unify_weight_[s]);
    }
    for (std::size_t s = 0; s < 4; ++s) {
      stage1_[s].collect("decoder.stage1.gfm" + std::to_string(s + 1), set);
    }
    isf_primary_[0].collect("decoder.stage2.isf_primary", set);
    gfm_primary_[0].collect("decoder.stage2.gfm_primary", set);
    isf_auxiliary_[0].collect("decoder.stage2.isf_auxiliary", set);
    gfm_auxiliary_[0].collect("decoder.stage2.gfm_auxiliary", set);
    dgg_[0].collect("decoder.stage3.dgg", set);
    if (cfg_.has_fusion_projection()) {
      set.add_parameter("decoder.fusion.weight", fusion_weight_);
      fusion_bn_[0].collect("decoder.fusion.bn", set);
    }
    set.add_parameter("heads.seg.weight", seg_head_);
    set.add_parameter("heads.depth.weight", depth_head_);
    loss_.collect("loss", set);
    return set;
  }

  /// Copies values from tensors with matching names and shapes. Every
  /// parameter and buffer of this model must be present.
  template <std::floating_point U>
  void load(const std::vector<NamedTensor<U>>& source) {
    std::map<std::string, const Tensor<U>*> by_name;
    for (const auto& nt : source) by_name[nt.name] = &nt.tensor;
    for (auto& nt : parameters().all()) {
      auto it = by_name.find(nt.name);
      if (it == by_name.end()) throw DataError("missing tensor '" + nt.name + "'");
      if (!(it->second->shape() == nt.tensor.shape())) {
        throw DimensionError("tensor '" + nt.name + "' has shape " + to_string(it->second->shape()) +
                             ", model expects " + to_string(nt.tensor.shape()));
      }
      auto src = it->second->data();
      auto dst = nt.tensor.mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
  }

  /// Same architecture and values in another precision (e.g. the f64
  /// replay used by gradient checks).
  template <std::floating_point U>
  DepthPolyp<U> cast() const {
    DepthPolyp<U> out(cfg_, 0);
    out.load(parameters().all());
    return out;
  }

  // Direct access for tests and accounting.
  Gfm<T>& stage1_gfm(std::size_t i) { return stage1_.at(i); }
  Isf<T>& isf_primary() { return isf_primary_[0]; }
  Dgg<T>& dgg() { return dgg_[0]; }
  Tensor<T>& seg_head() { return seg_head_; }
  Tensor<T>& depth_head() { return depth_head_; }

 private:
  NetworkConfig cfg_;
  std::vector<ConvBnRelu<T>> stem_;
  std::vector<std::vector<ConvBnRelu<T>>> stages_;
  std::array<Tensor<T>, 4> unify_weight_;
  std::vector<Gfm<T>> stage1_;
  std::vector<Isf<T>> isf_primary_, isf_auxiliary_;
  std::vector<Gfm<T>> gfm_primary_, gfm_auxiliary_;
  std::vector<Dgg<T>> dgg_;
  Tensor<T> fusion_weight_;
  std::vector<BatchNorm<T>> fusion_bn_;
  Tensor<T> seg_head_;
  Tensor<T> depth_head_;
  LossState<T> loss_;
};

}  // namespace depthpolyp
