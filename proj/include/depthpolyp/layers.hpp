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

// Parameter bookkeeping and the small conv/BN building units shared by the
// blocks and the network.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "depthpolyp/ops.hpp"
#include "depthpolyp/rng.hpp"

namespace depthpolyp {

template <std::floating_point T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;  // participates in decoupled weight decay
};

/// Flat, ordered view of a model's learnable parameters and state buffers.
/// Tensors share storage with the layers that own them.
template <std::floating_point T>
struct ParameterSet {
  std::vector<NamedTensor<T>> parameters;
  std::vector<NamedTensor<T>> buffers;

  void add_parameter(std::string name, Tensor<T> t, bool decay = true) {
    t.set_requires_grad(true);
    parameters.push_back({std::move(name), std::move(t), decay});
  }
  void add_buffer(std::string name, Tensor<T> t) {
    buffers.push_back({std::move(name), std::move(t), false});
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters) n += p.tensor.numel();
    return n;
  }

  /// Parameters followed by buffers: everything a checkpoint stores.
  std::vector<NamedTensor<T>> all() const {
    std::vector<NamedTensor<T>> out = parameters;
    out.insert(out.end(), buffers.begin(), buffers.end());
    return out;
  }
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// He-normal initialised tensor, std = sqrt(2 / fan_in).
template <std::floating_point T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::vector<T> v(shape.numel());
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (T& x : v) x = static_cast<T>(rng.normal() * std);
  return Tensor<T>(shape, std::move(v));
}

template <std::floating_point T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;

  explicit BatchNorm(std::size_t channels)
      : gamma(Shape{1, channels, 1, 1}, T{1}),
        beta(Shape{1, channels, 1, 1}, T{0}),
        state(BatchNormState<T>::make(channels)) {}

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    return batchnorm2d(x, gamma, beta, state, mode);
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.add_parameter(join_name(prefix, "gamma"), gamma, false);
    set.add_parameter(join_name(prefix, "beta"), beta, false);
    set.add_buffer(join_name(prefix, "running_mean"), state.running_mean);
    set.add_buffer(join_name(prefix, "running_var"), state.running_var);
  }
};

/// Dense K x K conv (stride s, padding K/2) -> BN -> ReLU.
template <std::floating_point T>
struct ConvBnRelu {
  Tensor<T> weight;
  BatchNorm<T> bn;
  std::size_t stride;

  ConvBnRelu(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, Rng& rng)
      : weight(he_normal<T>(Shape{out, in, kernel, kernel}, in * kernel * kernel, rng)),
        bn(out),
        stride(stride_) {}

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) {
    return relu(bn(conv2d(x, weight, stride, weight.shape().h / 2), mode));
  }

  void collect(const std::string& prefix, ParameterSet<T>& set) const {
    set.add_parameter(join_name(prefix, "weight"), weight);
    bn.collect(join_name(prefix, "bn"), set);
  }
};

}  // namespace depthpolyp
