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
 * @file nn.hpp
 * @brief Transformer building blocks: parameter store, linear layers,
 *        embeddings with sinusoidal positions, multi-head attention,
 *        position-wise FFN and post-norm residual wiring.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mitvg/gradcheck.hpp"
#include "mitvg/ops.hpp"

namespace mitvg {

/// Ordered, named collection of trainable tensors.
template <typename T>
class ParamStore {
 public:
  /// Adds a [rows x cols] (or [rows] when cols == 0) parameter drawn from
  /// uniform(-bound, bound). bound == 0 yields zeros.
  Tensor<T> add(const std::string& name, Shape shape, double bound, std::mt19937_64& rng) {
    for (const auto& p : params_) {
      if (p.name == name) throw ContractError("duplicate parameter name " + name);
    }
    std::vector<T> values(shape_numel(shape), T(0));
    if (bound > 0) {
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : values) v = static_cast<T>(dist(rng));
    }
    Tensor<T> t(std::move(shape), std::move(values), true);
    params_.push_back({name, t});
    return t;
  }

  Tensor<T> add_constant(const std::string& name, Shape shape, T value) {
    Tensor<T> t = Tensor<T>::full(std::move(shape), value, true);
    params_.push_back({name, t});
    return t;
  }

  const std::vector<NamedTensor<T>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return &p.tensor;
    }
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedTensor<T>> params_;
};

/// Inverted dropout applied to sub-layer outputs. Inactive unless the rate
/// is positive and training is on.
template <typename T>
struct Dropout {
  double rate = 0;
  bool training = false;
  std::mt19937_64 rng{0};

  Tensor<T> operator()(const Tensor<T>& x) {
    if (!training || rate <= 0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    std::vector<T> mask(x.numel());
    const T s = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& m : mask) m = keep(rng) ? s : T(0);
    return hadamard(x, Tensor<T>(x.shape(), std::move(mask)));
  }
};

inline double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
         std::mt19937_64& rng)
      : weight(store.add(name + ".weight", {in, out}, fan_in_bound(in), rng)),
        bias(store.add(name + ".bias", {out}, 0.0, rng)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return add_row_bias(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;
  T eps = T(1e-6);

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t width)
      : gain(store.add_constant(name + ".gain", {width}, T(1))),
        bias(store.add_constant(name + ".bias", {width}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias, eps); }
};

/// Post-norm residual wrapper: LayerNorm(x + f(x)). `fx` is f(x), already
/// computed by the caller.
template <typename T>
Tensor<T> sublayer(const Tensor<T>& x, const Tensor<T>& fx, const LayerNorm<T>& norm,
                   Dropout<T>* dropout = nullptr) {
  if (fx.shape() != x.shape()) {
    throw ShapeError("sublayer: f changed shape " + shape_string(x.shape()) + " -> " +
                     shape_string(fx.shape()));
  }
  Tensor<T> body = dropout ? (*dropout)(fx) : fx;
  return norm(add(x, body));
}

/// Sinusoidal positions: even dim 2k -> sin(j / 10000^(2k/M)), odd dim
/// 2k+1 -> cos(j / 10000^(2k/M)); positions are 0-based.
template <typename T>
class PositionalEncoder {
 public:
  PositionalEncoder() = default;
  PositionalEncoder(std::size_t d_model, std::size_t max_len) : d_model_(d_model), max_len_(max_len) {
    table_.resize(max_len * d_model);
    for (std::size_t pos = 0; pos < max_len; ++pos) {
      for (std::size_t i = 0; i < d_model; ++i) {
        const double k2 = static_cast<double>(i - (i % 2));
        const double angle = static_cast<double>(pos) / std::pow(10000.0, k2 / static_cast<double>(d_model));
        table_[pos * d_model + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
    }
  }

  T value(std::size_t pos, std::size_t dim) const { return table_.at(pos * d_model_ + dim); }
  std::size_t max_len() const { return max_len_; }

  /// Rows 0..length-1 as a constant tensor.
  Tensor<T> rows(std::size_t length) const {
    if (length > max_len_) {
      throw ContractError("sequence of " + std::to_string(length) + " tokens exceeds positional table of " +
                          std::to_string(max_len_));
    }
    return Tensor<T>({length, d_model_},
                     std::vector<T>(table_.begin(), table_.begin() + length * d_model_));
  }

 private:
  std::size_t d_model_ = 0;
  std::size_t max_len_ = 0;
  std::vector<T> table_;
};

/// Token embedding table plus additive positional encoding.
template <typename T>
struct Embedding {
  Tensor<T> table;  // [vocab x M]
  PositionalEncoder<T> positions;

  Embedding() = default;
  Embedding(ParamStore<T>& store, const std::string& name, std::size_t vocab, std::size_t d_model,
            std::size_t max_len, std::mt19937_64& rng)
      : table(store.add(name + ".table", {vocab, d_model}, fan_in_bound(d_model), rng)),
        positions(d_model, max_len) {}

  std::size_t vocab_size() const { return table.rows(); }

  /// Row j = table[token_j] + PE(j).
  Tensor<T> embed_sequence(const std::vector<std::size_t>& tokens) const {
    if (tokens.empty()) throw ContractError("embed_sequence: empty token list");
    for (auto id : tokens) {
      if (id >= vocab_size()) {
        throw ContractError("embed_sequence: token id " + std::to_string(id) +
                            " outside vocabulary of " + std::to_string(vocab_size()));
      }
    }
    return add(gather_rows(table, tokens), positions.rows(tokens.size()));
  }
};

template <typename T>
struct MultiHeadAttention {
  std::size_t heads = 1;
  Tensor<T> w_q, w_k, w_v, w_o;  // each [M x M]

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& store, const std::string& name, std::size_t d_model,
                     std::size_t n_heads, std::mt19937_64& rng)
      : heads(n_heads) {
    if (n_heads == 0 || d_model % n_heads != 0) {
      throw ContractError("d_model " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(n_heads) + " heads");
    }
    const double b = fan_in_bound(d_model);
    w_q = store.add(name + ".w_q", {d_model, d_model}, b, rng);
    w_k = store.add(name + ".w_k", {d_model, d_model}, b, rng);
    w_v = store.add(name + ".w_v", {d_model, d_model}, b, rng);
    w_o = store.add(name + ".w_o", {d_model, d_model}, b, rng);
  }

  Tensor<T> operator()(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                       const AttentionMask* mask = nullptr, AttentionProbe<T>* probe = nullptr) const {
    if (k.rows() != v.rows()) {
      throw ShapeError("multi_head: keys " + shape_string(k.shape()) + " and values " +
                       shape_string(v.shape()) + " differ in length");
    }
    Tensor<T> mixed = attention(matmul(q, w_q), matmul(k, w_k), matmul(v, w_v), heads, mask, probe);
    return matmul(mixed, w_o);
  }
};

template <typename T>
struct FeedForward {
  Linear<T> inner;
  Linear<T> outer;

  FeedForward() = default;
  FeedForward(ParamStore<T>& store, const std::string& name, std::size_t d_model, std::size_t d_ff,
              std::mt19937_64& rng)
      : inner(store, name + ".inner", d_model, d_ff, rng), outer(store, name + ".outer", d_ff, d_model, rng) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return outer(relu(inner(x))); }
};

}  // namespace mitvg
