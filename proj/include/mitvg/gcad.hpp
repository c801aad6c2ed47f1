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
 * @file gcad.hpp
 * @brief Gated cross-attention decoder.
 *
 * Each layer runs causal self-attention over the answer prefix, then
 * attends separately to the encoder context and to the grounding features
 * and mixes the two reads with per-channel sigmoid gates:
 *
 *   context_gate = sigmoid(gate_e [prefix, context_read] + bias)
 *   visual_gate  = sigmoid(gate_g [prefix, visual_read] + bias)
 *   mixed        = context_gate * context_read + visual_gate * visual_read
 *
 * followed by a position-wise FFN. An output head maps the last layer to
 * vocabulary logits.
 */

#pragma once

#include <string>
#include <vector>

#include "mitvg/config.hpp"
#include "mitvg/diagnostics.hpp"
#include "mitvg/nn.hpp"

namespace mitvg {

template <typename T>
struct GcaLayer {
  MultiHeadAttention<T> self_attn;
  LayerNorm<T> self_norm;
  MultiHeadAttention<T> context_attn;
  MultiHeadAttention<T> visual_attn;
  Linear<T> gate_e;  // [2d x d] over [prefix, context read]
  Linear<T> gate_g;  // [2d x d] over [prefix, visual read]
  LayerNorm<T> gated_norm;
  FeedForward<T> ffn;
  LayerNorm<T> ffn_norm;

  Tensor<T> gated_cross_attention(const Tensor<T>& j, const Tensor<T>& context, const Tensor<T>& visual,
                                  Diagnostics<T>* diag = nullptr) const {
    Tensor<T> e = context_attn(j, context, context, nullptr, probe(diag, "gcad.context"));
    Tensor<T> g = visual_attn(j, visual, visual, nullptr, probe(diag, "gcad.visual"));
    Tensor<T> alpha = sigmoid(gate_e(concat<T>({j, e}, 1)));
    Tensor<T> beta = sigmoid(gate_g(concat<T>({j, g}, 1)));
    if (diag) {
      diag->alpha.emplace_back(alpha.values().begin(), alpha.values().end());
      diag->beta.emplace_back(beta.values().begin(), beta.values().end());
    }
    return add(hadamard(alpha, e), hadamard(beta, g));
  }
};

template <typename T>
class GatedDecoder {
 public:
  GatedDecoder() = default;
  GatedDecoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg, std::size_t vocab,
               std::mt19937_64& rng) {
    const std::size_t m = cfg.d_model;
    for (std::size_t n = 0; n < cfg.decoder_layers; ++n) {
      const std::string p = name + ".layer" + std::to_string(n);
      layers_.push_back({MultiHeadAttention<T>(store, p + ".self_attn", m, cfg.heads, rng),
                         LayerNorm<T>(store, p + ".self_norm", m),
                         MultiHeadAttention<T>(store, p + ".context_attn", m, cfg.heads, rng),
                         MultiHeadAttention<T>(store, p + ".visual_attn", m, cfg.heads, rng),
                         Linear<T>(store, p + ".gate_e", 2 * m, m, rng),
                         Linear<T>(store, p + ".gate_g", 2 * m, m, rng),
                         LayerNorm<T>(store, p + ".gated_norm", m),
                         FeedForward<T>(store, p + ".ffn", m, cfg.d_ff, rng),
                         LayerNorm<T>(store, p + ".ffn_norm", m)});
    }
    head_ = Linear<T>(store, "head", m, vocab, rng);
  }

  /// Logits [Z x vocab] for the embedded (shifted) answer `r0` [Z x M].
  Tensor<T> logits(const Tensor<T>& r0, const Tensor<T>& context, const Tensor<T>& visual,
                   Dropout<T>* dropout = nullptr, Diagnostics<T>* diag = nullptr) const {
    const AttentionMask mask = AttentionMask::causal(r0.rows());
    Tensor<T> r = r0;
    for (const auto& layer : layers_) {
      Tensor<T> j = sublayer(r, layer.self_attn(r, r, r, &mask, probe(diag, "gcad.self")), layer.self_norm,
                             dropout);
      Tensor<T> p = sublayer(j, layer.gated_cross_attention(j, context, visual, diag), layer.gated_norm, dropout);
      r = sublayer(p, layer.ffn(p), layer.ffn_norm, dropout);
    }
    return head_(r);
  }

  const std::vector<GcaLayer<T>>& layers() const { return layers_; }
  std::vector<GcaLayer<T>>& mutable_layers() { return layers_; }
  const Linear<T>& head() const { return head_; }

 private:
  std::vector<GcaLayer<T>> layers_;
  Linear<T> head_;
};

}  // namespace mitvg
