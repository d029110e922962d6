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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "depthpolyp/accounting.hpp"
#include "depthpolyp/blocks.hpp"
#include "depthpolyp/grad_check.hpp"

namespace depthpolyp {
namespace {

template <class T = double>
Tensor<T> random_tensor(Shape s, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(dist(gen));
  return Tensor<T>(s, std::move(v));
}

template <class Block>
std::size_t enumerate_params(const Block& b) {
  ParameterSet<float> set;
  b.collect("", set);
  return set.parameter_count();
}

TEST(GfmTest, ChannelSplit) {
  GfmConfig c{16, 16, 2, 3};
  EXPECT_EQ(c.primary_channels(), 8u);
  EXPECT_EQ(c.auxiliary_channels(), 8u);
  GfmConfig odd{8, 10, 3, 3};
  EXPECT_EQ(odd.primary_channels(), 3u);
  EXPECT_EQ(odd.auxiliary_channels(), 7u);
  EXPECT_EQ(odd.multiplier(), 3u);
}

TEST(GfmTest, ParameterCountAgainstDense) {
  Rng rng(1);
  Gfm<float> gfm(GfmConfig{16, 16, 2, 3}, rng);
  // 16*8 pointwise + 8*9 depthwise + 2*(8+8) BN affine.
  EXPECT_EQ(enumerate_params(gfm), 232u);
  EXPECT_EQ(cost::gfm_params(gfm.config()), 232u);
  EXPECT_EQ(cost::dense_equivalent_params(gfm.config()), 2304u + 32u);
  // Conv weights 200 vs 2304; with BN 232 vs 2336. Both under 10%.
  EXPECT_LT(10 * 200u, 2304u);
  EXPECT_LT(10 * 232u, 2336u);
}

TEST(GfmTest, ClosedFormMatchesEnumerationProperty) {
  std::mt19937 gen(7);
  for (int trial = 0; trial < 40; ++trial) {
    GfmConfig c{1 + gen() % 40, 2 + gen() % 40, 1 + gen() % 4, 1 + 2 * (gen() % 3)};
    if (c.primary_channels() < 1 || c.auxiliary_channels() < 1) continue;
    Rng rng(trial);
    Gfm<float> gfm(c, rng);
    const std::uint64_t cp = c.primary_channels(), ca = c.auxiliary_channels();
    const std::uint64_t closed = c.in_channels * cp + ca * c.dw_kernel * c.dw_kernel + 2 * (cp + ca);
    EXPECT_EQ(enumerate_params(gfm), closed);
    EXPECT_EQ(cost::gfm_params(c), closed);
    if (c.multiplier() * cp == ca) {
      EXPECT_EQ(closed, c.in_channels * cp + cp * c.multiplier() * c.dw_kernel * c.dw_kernel + 2 * (cp + ca));
    }
    if (c.dw_kernel > 1) {
      EXPECT_LT(closed, c.in_channels * c.out_channels * c.dw_kernel * c.dw_kernel);
    }
  }
}

TEST(GfmTest, OutputShapesWithUnevenSplit) {
  Rng rng(3);
  Gfm<float> gfm(GfmConfig{6, 10, 3, 3}, rng);
  auto out = gfm.forward(random_tensor<float>(Shape{2, 6, 5, 5}, 4), Mode::train);
  EXPECT_EQ(out.primary.shape(), (Shape{2, 3, 5, 5}));
  EXPECT_EQ(out.auxiliary.shape(), (Shape{2, 7, 5, 5}));
  EXPECT_EQ(gfm.forward_concat(random_tensor<float>(Shape{1, 6, 4, 4}, 5), Mode::eval).shape().c, 10u);
}

TEST(GfmTest, ZeroInputGivesZeroOutputs) {
  Rng rng(5);
  Gfm<float> gfm(GfmConfig{16, 16, 2, 3}, rng);
  auto out = gfm.forward(Tensor<float>(Shape{2, 16, 4, 4}), Mode::train);
  for (float v : out.primary.data()) EXPECT_EQ(v, 0.0f);
  for (float v : out.auxiliary.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GfmTest, InvalidConfigs) {
  Rng rng(0);
  EXPECT_THROW(Gfm<float>(GfmConfig{4, 1, 2, 3}, rng), ConfigError);  // C_p = 0
  EXPECT_THROW(Gfm<float>(GfmConfig{4, 4, 1, 3}, rng), ConfigError);  // C_a = 0
  EXPECT_THROW(Gfm<float>(GfmConfig{4, 4, 2, 4}, rng), ConfigError);  // even kernel
  Gfm<float> ok(GfmConfig{4, 4, 2, 3}, rng);
  EXPECT_THROW(ok.forward(Tensor<float>(Shape{1, 5, 2, 2}), Mode::train), DimensionError);
}

TEST(IsfTest, ZeroGammaIsIdentityBitExact) {
  Rng rng(9);
  Isf<float> isf(IsfConfig{16, 4, 3}, rng);
  auto x = random_tensor<float>(Shape{2, 16, 6, 6}, 10, -5.0, 5.0);
  Tensor<float> y = isf.forward(x);
  EXPECT_TRUE(std::equal(y.data().begin(), y.data().end(), x.data().begin()));
}

TEST(IsfTest, UnitGammaDeltaKernelAddsShuffledInput) {
  Rng rng(0);
  Isf<double> isf(IsfConfig{4, 2, 3}, rng);
  std::fill(isf.dw_weight.mutable_data().begin(), isf.dw_weight.mutable_data().end(), 0.0);
  for (std::size_t c = 0; c < 4; ++c) isf.dw_weight.mutable_data()[c * 9 + 4] = 1.0;
  std::fill(isf.gamma.mutable_data().begin(), isf.gamma.mutable_data().end(), 1.0);
  // Channel c holds the value c + 1 everywhere; shuffle order is [0, 2, 1, 3].
  Tensor<double> x(Shape{1, 4, 2, 2});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t p = 0; p < 4; ++p) x.mutable_data()[c * 4 + p] = static_cast<double>(c + 1);
  Tensor<double> y = isf.forward(x);
  const double expected[4] = {1 + 1, 2 + 3, 3 + 2, 4 + 4};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t p = 0; p < 4; ++p) EXPECT_EQ(y.data()[c * 4 + p], expected[c]);
}

TEST(IsfTest, ParameterCount) {
  Rng rng(0);
  Isf<float> isf(IsfConfig{128, 4, 3}, rng);
  EXPECT_EQ(enumerate_params(isf), 1156u);
  EXPECT_EQ(cost::isf_params(isf.config()), 1156u);
}

TEST(IsfTest, GammaGradientNonzero) {
  Rng rng(11);
  Isf<double> isf(IsfConfig{8, 4, 3}, rng);
  auto x = random_tensor(Shape{1, 8, 6, 6}, 12);
  auto r = random_tensor(Shape{1, 8, 6, 6}, 13);
  auto f = [&] { return sum(mul(isf.forward(x), r)); };
  EXPECT_LT(grad_check_params(f, {isf.gamma}), 1e-3);
  {
    GradTape<double> tape;
    GradTape<double>::Scope scope(tape);
    backward(f());
  }
  for (double g : isf.gamma.grad()) EXPECT_NE(g, 0.0);
}

TEST(IsfTest, ChannelMismatch) {
  Rng rng(0);
  Isf<float> isf(IsfConfig{8, 4, 3}, rng);
  EXPECT_THROW(isf.forward(Tensor<float>(Shape{1, 4, 2, 2})), DimensionError);
  EXPECT_THROW(Isf<float>(IsfConfig{6, 4, 3}, rng), ConfigError);
}

TEST(DggTest, ZeroPhiScalesByOnePointFiveBitExact) {
  Dgg<float> dgg(DggConfig{16, 4});
  auto x = random_tensor<float>(Shape{2, 16, 5, 5}, 20, -3.0, 3.0);
  Tensor<float> y = dgg.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], 1.5f * x.data()[i]);
}

TEST(DggTest, GatesInsideUnitIntervalAndResidualForm) {
  Dgg<double> dgg(DggConfig{8, 4});
  auto w = random_tensor(Shape{4, 4, 1, 1}, 21, -3.0, 3.0);
  auto b = random_tensor(Shape{1, 4, 1, 1}, 22, -3.0, 3.0);
  std::copy(w.data().begin(), w.data().end(), dgg.phi_weight.mutable_data().begin());
  std::copy(b.data().begin(), b.data().end(), dgg.phi_bias.mutable_data().begin());
  auto x = random_tensor(Shape{3, 8, 4, 4}, 23, 0.0, 2.0);
  Tensor<double> gates = dgg.gates(x);
  for (double g : gates.data()) {
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
  }
  Tensor<double> y = dgg.forward(x);
  double nx = 0.0, ny = 0.0;
  for (std::size_t bi = 0; bi < 3; ++bi)
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t p = 0; p < 16; ++p) {
        const double xv = x.at(bi, c, p / 4, p % 4);
        const double yv = y.at(bi, c, p / 4, p % 4);
        EXPECT_DOUBLE_EQ(yv, xv + gates.at(bi, c / 2, 0, 0) * xv);
        nx += xv * xv;
        ny += yv * yv;
      }
  EXPECT_GE(ny, nx);
}

TEST(DggTest, ZeroInputGivesZero) {
  Dgg<float> dgg(DggConfig{8, 4});
  std::fill(dgg.phi_weight.mutable_data().begin(), dgg.phi_weight.mutable_data().end(), 0.3f);
  Tensor<float> y = dgg.forward(Tensor<float>(Shape{1, 8, 3, 3}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(DggTest, ParameterCountAndErrors) {
  Dgg<float> dgg(DggConfig{64, 4});
  EXPECT_EQ(enumerate_params(dgg), 20u);
  EXPECT_THROW(dgg.forward(Tensor<float>(Shape{1, 32, 2, 2})), DimensionError);
  EXPECT_THROW(Dgg<float>(DggConfig{10, 4}), ConfigError);
}

// All three blocks against finite differences on random 1x8x6x6 inputs,
// with respect to the input and every parameter.
TEST(BlockGradientTest, FiniteDifferences) {
  auto x = random_tensor(Shape{1, 8, 6, 6}, 30);
  auto r8 = random_tensor(Shape{1, 8, 6, 6}, 31);
  auto r4 = random_tensor(Shape{1, 4, 6, 6}, 32);

  Rng rng(33);
  Gfm<double> gfm(GfmConfig{8, 8, 2, 3}, rng);
  auto gfm_loss = [&](const Tensor<double>& t) {
    auto o = gfm.forward(t, Mode::train);
    return add(sum(mul(o.primary, r4)), sum(mul(o.auxiliary, r4)));
  };
  EXPECT_LT(grad_check(gfm_loss, x), 1e-3);
  ParameterSet<double> gp;
  gfm.collect("", gp);
  std::vector<Tensor<double>> gfm_params;
  for (auto& p : gp.parameters) gfm_params.push_back(p.tensor);
  EXPECT_LT(grad_check_params([&] { return gfm_loss(x); }, gfm_params), 1e-3);

  Isf<double> isf(IsfConfig{8, 4, 3}, rng);
  for (double& g : isf.gamma.mutable_data()) g = 0.7;
  EXPECT_LT(grad_check([&](const Tensor<double>& t) { return sum(mul(isf.forward(t), r8)); }, x), 1e-3);
  EXPECT_LT(grad_check_params([&] { return sum(mul(isf.forward(x), r8)); }, {isf.dw_weight, isf.gamma}), 1e-3);

  Dgg<double> dgg(DggConfig{8, 4});
  auto w = random_tensor(Shape{4, 4, 1, 1}, 34);
  std::copy(w.data().begin(), w.data().end(), dgg.phi_weight.mutable_data().begin());
  EXPECT_LT(grad_check([&](const Tensor<double>& t) { return sum(mul(dgg.forward(t), r8)); }, x), 1e-3);
  EXPECT_LT(grad_check_params([&] { return sum(mul(dgg.forward(x), r8)); }, {dgg.phi_weight, dgg.phi_bias}), 1e-3);
}

}  // namespace
}  // namespace depthpolyp
