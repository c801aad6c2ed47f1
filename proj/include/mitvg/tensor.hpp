// Copyright 2026 The MITVG Authors.
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

/**
 * @file tensor.hpp
 * @brief Dense row-major tensor handle and the reverse-mode tape.
 *
 * A Tensor is a cheap shared handle onto a Storage block. Operations in
 * ops.hpp produce new tensors; when a Tape is active on the calling thread
 * and any operand requires a gradient, the operation is recorded together
 * with its backward rule. Tape::backward() replays the rules in reverse
 * execution order and accumulates (sums) into every reached grad buffer.
 */

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mitvg/errors.hpp"

namespace mitvg {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;

  // Lazily allocates the gradient buffer.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

template <typename T>
using StoragePtr = std::shared_ptr<Storage<T>>;

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(std::make_shared<Storage<T>>()) {}

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : data_(std::make_shared<Storage<T>>()) {
    if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
    for (auto d : shape) {
      if (d == 0) throw ShapeError("zero-sized dimension in " + shape_string(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("shape " + shape_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    data_->shape = std::move(shape);
    data_->values = std::move(values);
    data_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  static Tensor vector(std::vector<T> values, bool requires_grad = false) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
  }

  // Builds a 2-D tensor from nested rows; all rows must share a length.
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows,
                       bool requires_grad = false) {
    std::vector<T> flat;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("ragged matrix literal");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(flat), requires_grad);
  }

  static Tensor from_storage(StoragePtr<T> s) {
    Tensor t;
    t.data_ = std::move(s);
    return t;
  }

  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t dim(std::size_t i) const { return data_->shape.at(i); }
  std::size_t numel() const { return data_->values.size(); }
  std::size_t rows() const { return data_->shape.at(0); }
  std::size_t cols() const { return rank() >= 2 ? data_->shape[1] : 1; }

  std::span<const T> values() const { return data_->values; }
  // Mutable access for optimizers, initializers and finite-difference probes.
  std::span<T> mutable_values() { return data_->values; }
  std::span<const T> grad() const { return data_->grad; }
  bool has_grad() const { return !data_->grad.empty(); }
  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool on) { data_->requires_grad = on; }
  void zero_grad() { data_->grad.clear(); }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return data_->values[0];
  }
  T at(std::size_t r, std::size_t c) const { return data_->values[r * cols() + c]; }
  T operator[](std::size_t i) const { return data_->values[i]; }

  // Deep copy with no gradient and no tape attachment.
  Tensor detach() const { return Tensor(shape(), data_->values, false); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_->values.begin(), data_->values.end());
    return Tensor<U>(shape(), std::move(out), false);
  }

  const StoragePtr<T>& storage() const { return data_; }
  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  StoragePtr<T> data_;
};

/// Ordered record of primitive operations for reverse-mode differentiation.
template <typename T>
class Tape {
 public:
  struct Node {
    std::vector<StoragePtr<T>> inputs;
    StoragePtr<T> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<StoragePtr<T>> inputs, StoragePtr<T> output,
              std::function<void()> backward) {
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in
  /// reverse order. Leaf gradients accumulate into existing grad buffers;
  /// intermediate results start each call from zero.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          shape_string(loss.shape()));
    }
    const auto& target = loss.storage();
    auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                           [&](const Node& n) { return n.output == target; });
    if (it == nodes_.rend()) {
      if (!target->requires_grad) {
        throw ContractError("loss is not reachable from this tape");
      }
      target->grad_buffer()[0] += T(1);
      return;
    }
    for (auto& n : nodes_) n.output->grad.clear();
    target->grad_buffer()[0] += T(1);
    for (; it != nodes_.rend(); ++it) {
      if (it->output->grad.empty()) continue;  // not on a path to the loss
      it->backward();
    }
  }

  static Tape* active() { return active_; }

 private:
  template <typename>
  friend class TapeScope;
  template <typename>
  friend class NoTapeScope;
  static inline thread_local Tape* active_ = nullptr;

  std::vector<Node> nodes_;
};

/// Makes `tape` the recording target on this thread for the scope lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_) { Tape<T>::active_ = &tape; }
  ~TapeScope() { Tape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording on this thread (evaluation and finite differences).
template <typename T>
class NoTapeScope {
 public:
  NoTapeScope() : previous_(Tape<T>::active_) { Tape<T>::active_ = nullptr; }
  ~NoTapeScope() { Tape<T>::active_ = previous_; }
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

}  // namespace mitvg
