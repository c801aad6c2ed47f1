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
 * @file mite.hpp
 * @brief Incremental multimodal encoder.
 *
 * Each round turns the utterance features into a new context state by
 * attending, layer by layer, to itself, to the round's grounding features
 * and to the previous context state. The state before round 1 is the
 * caption features themselves.
 */

#pragma once

#include <string>
#include <vector>

#include "mitvg/config.hpp"
#include "mitvg/diagnostics.hpp"
#include "mitvg/nn.hpp"

namespace mitvg {

template <typename T>
struct ContextState {
  std::size_t round = 0;
  Tensor<T> state;  // [L_i x M]
};

template <typename T>
struct MiteLayer {
  MultiHeadAttention<T> self_attn;
  LayerNorm<T> self_norm;
  MultiHeadAttention<T> cross_attn;  // onto grounding features
  LayerNorm<T> cross_norm;
  MultiHeadAttention<T> history_attn;  // onto c_{i-1}
  LayerNorm<T> history_norm;
  FeedForward<T> ffn;
  LayerNorm<T> ffn_norm;
};

template <typename T>
class MiteEncoder {
 public:
  MiteEncoder() = default;
  MiteEncoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg, std::mt19937_64& rng)
      : d_model_(cfg.d_model) {
    for (std::size_t n = 0; n < cfg.encoder_layers; ++n) {
      const std::string p = name + ".layer" + std::to_string(n);
      layers_.push_back({MultiHeadAttention<T>(store, p + ".self_attn", cfg.d_model, cfg.heads, rng),
                         LayerNorm<T>(store, p + ".self_norm", cfg.d_model),
                         MultiHeadAttention<T>(store, p + ".cross_attn", cfg.d_model, cfg.heads, rng),
                         LayerNorm<T>(store, p + ".cross_norm", cfg.d_model),
                         MultiHeadAttention<T>(store, p + ".history_attn", cfg.d_model, cfg.heads, rng),
                         LayerNorm<T>(store, p + ".history_norm", cfg.d_model),
                         FeedForward<T>(store, p + ".ffn", cfg.d_model, cfg.d_ff, rng),
                         LayerNorm<T>(store, p + ".ffn_norm", cfg.d_model)});
    }
  }

  /// State before round 1: the caption features, untouched.
  static ContextState<T> initial(const Tensor<T>& caption_features) { return {0, caption_features}; }

  /// Next context state from one utterance. `round` must be c_prev.round + 1.
  ContextState<T> encode_round(const Tensor<T>& grounded, const Tensor<T>& u, const ContextState<T>& c_prev,
                               std::size_t round, Dropout<T>* dropout = nullptr,
                               Diagnostics<T>* diag = nullptr) const {
    if (round != c_prev.round + 1) {
      throw ContractError("encode_round: round " + std::to_string(round) + " cannot follow context of round " +
                          std::to_string(c_prev.round));
    }
    for (const Tensor<T>* t : {&grounded, &u, &c_prev.state}) {
      if (t->rank() != 2 || t->cols() != d_model_) {
        throw ShapeError("encode_round: expected width " + std::to_string(d_model_) + ", got " +
                         shape_string(t->shape()));
      }
    }
    Tensor<T> c = u;
    for (const auto& layer : layers_) {
      Tensor<T> a = sublayer(c, layer.self_attn(c, c, c, nullptr, probe(diag, "mite.self")), layer.self_norm,
                             dropout);
      Tensor<T> b = sublayer(a, layer.cross_attn(a, grounded, grounded, nullptr, probe(diag, "mite.cross")),
                             layer.cross_norm, dropout);
      Tensor<T> f = sublayer(
          b, layer.history_attn(b, c_prev.state, c_prev.state, nullptr, probe(diag, "mite.history")),
          layer.history_norm, dropout);
      c = sublayer(f, layer.ffn(f), layer.ffn_norm, dropout);
    }
    return {round, c};
  }

  std::size_t layers() const { return layers_.size(); }

 private:
  std::size_t d_model_ = 0;
  std::vector<MiteLayer<T>> layers_;
};

}  // namespace mitvg
