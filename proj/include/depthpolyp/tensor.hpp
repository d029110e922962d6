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

// Dense 4-D tensors (batch, channel, height, width) and the gradient tape
// that records differentiable operations on them.

#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "depthpolyp/errors.hpp"

namespace depthpolyp {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr bool is_scalar() const { return n == 1 && c == 1 && h == 1 && w == 1; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
         std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

namespace detail {

template <std::floating_point T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;

  T* ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T{0});
    return grad.data();
  }
};

}  // namespace detail

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : node_(std::make_shared<detail::Node<T>>()) {
    node_->shape = shape;
    node_->value.assign(shape.numel(), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<detail::Node<T>>()) {
    if (values.size() != shape.numel()) {
      throw DimensionError("tensor of shape " + to_string(shape) + " needs " +
                           std::to_string(shape.numel()) + " values, got " +
                           std::to_string(values.size()));
    }
    node_->shape = shape;
    node_->value = std::move(values);
  }

  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Writable view. Only meant for leaves (parameters, buffers, inputs);
  /// values produced by an op are treated as immutable.
  std::span<T> mutable_data() { return node_->value; }

  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const Shape& s = node_->shape;
    assert(n < s.n && c < s.c && h < s.h && w < s.w);
    return node_->value[((n * s.c + c) * s.h + h) * s.w + w];
  }

  T item() const {
    if (!shape().is_scalar()) {
      throw UsageError("item() on non-scalar tensor of shape " + to_string(shape()));
    }
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return {node_->ensure_grad(), node_->value.size()}; }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy detached from any tape.
  Tensor clone() const { return Tensor(shape(), node_->value); }

  template <std::floating_point U>
  Tensor<U> cast() const {
    std::vector<U> out(node_->value.begin(), node_->value.end());
    return Tensor<U>(shape(), std::move(out));
  }

  bool all_finite() const {
    return std::all_of(node_->value.begin(), node_->value.end(),
                       [](T v) { return std::isfinite(v); });
  }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Ordered record of differentiable operations. Ops append as they execute,
/// so the record list is already in topological order and backward is a
/// single reverse sweep.
///
/// A tape is made current for the calling thread with a Scope; ops executed
/// with no current tape, or with no input requiring gradients, record nothing.
template <std::floating_point T>
class GradTape {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  struct Record {
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> backward;
  };

  class Scope {
   public:
    explicit Scope(GradTape& tape) : previous_(current_) { current_ = &tape; }
    ~Scope() { current_ = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* previous_;
  };

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* current() { return current_; }

  void record(std::vector<NodePtr> inputs, NodePtr output, std::function<void()> backward) {
    records_.push_back({std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  void clear() { records_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf.
  /// The tape is consumed.
  void backward(const Tensor<T>& loss) {
    if (!loss.shape().is_scalar()) {
      throw UsageError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (records_.empty()) throw UsageError("backward() on an empty tape");
    if (!loss.requires_grad()) throw UsageError("loss does not depend on any gradient leaf");
    loss.node()->ensure_grad()[0] += T{1};
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->output->grad.empty()) continue;  // not on a path to the loss
      it->backward();
    }
    records_.clear();
  }

 private:
  static inline thread_local GradTape* current_ = nullptr;
  std::vector<Record> records_;
};

template <std::floating_point T>
void backward(const Tensor<T>& loss) {
  auto* tape = GradTape<T>::current();
  if (tape == nullptr) throw UsageError("backward() called with no active tape");
  tape->backward(loss);
}

/// Multiply-accumulate counter incremented by the op kernels as they run.
/// Used to audit the closed-form MAC accounting.
class MacCounter {
 public:
  static std::uint64_t& value() {
    static thread_local std::uint64_t count = 0;
    return count;
  }
  static void add(std::uint64_t n) { value() += n; }
  static void reset() { value() = 0; }
};

}  // namespace depthpolyp
