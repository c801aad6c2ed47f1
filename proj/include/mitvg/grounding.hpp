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

#pragma once

#include <string>
#include <vector>

#include "mitvg/dataset.hpp"
#include "mitvg/diagnostics.hpp"
#include "mitvg/nn.hpp"

namespace mitvg {

/// Whole-image features as a constant [K x V] tensor.
template <typename T>
Tensor<T> image_tensor(const ImageFeatures& img) {
  return Tensor<T>({img.objects, img.dim}, std::vector<T>(img.values.begin(), img.values.end()));
}

/// Rows named by the round's grounding indices, in the given order. An
/// empty list selects every object (whole-image fallback).
template <typename T>
Tensor<T> select_grounding(const ImageFeatures& img, const std::vector<std::size_t>& indices,
                           std::size_t round = 0) {
  if (indices.empty()) return image_tensor<T>(img);
  std::vector<T> rows;
  rows.reserve(indices.size() * img.dim);
  for (auto k : indices) {
    if (k >= img.objects) {
      throw DataError("round " + std::to_string(round) + ": grounding index " + std::to_string(k) +
                      " >= object count " + std::to_string(img.objects) + " for image " +
                      std::to_string(img.image_id));
    }
    auto r = img.row(k);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return Tensor<T>({indices.size(), img.dim}, std::move(rows));
}

template <typename T>
struct GroundingBlock {
  MultiHeadAttention<T> self_attn;
  LayerNorm<T> attn_norm;
  FeedForward<T> ffn;
  LayerNorm<T> ffn_norm;
};

/// Projection to model width followed by `grounding_layers` self-attention + FFN blocks.
/// No positional encoding: objects form an unordered set.
template <typename T>
class GroundingEncoder {
 public:
  GroundingEncoder() = default;
  GroundingEncoder(ParamStore<T>& store, const std::string& name, const ModelConfig& cfg, std::mt19937_64& rng)
      : projection_(store, name + ".projection", cfg.feature_dim, cfg.d_model, rng) {
    for (std::size_t n = 0; n < cfg.grounding_layers; ++n) {
      const std::string p = name + ".block" + std::to_string(n);
      blocks_.push_back({MultiHeadAttention<T>(store, p + ".self_attn", cfg.d_model, cfg.heads, rng),
                         LayerNorm<T>(store, p + ".attn_norm", cfg.d_model),
                         FeedForward<T>(store, p + ".ffn", cfg.d_model, cfg.d_ff, rng),
                         LayerNorm<T>(store, p + ".ffn_norm", cfg.d_model)});
    }
  }

  std::size_t layers() const { return blocks_.size(); }

  Tensor<T> encode(const Tensor<T>& v0, Dropout<T>* dropout = nullptr, Diagnostics<T>* diag = nullptr) const {
    if (v0.rank() != 2 || v0.cols() != projection_.weight.rows()) {
      throw ShapeError("encode_grounding: features " + shape_string(v0.shape()) + " do not match width " +
                       std::to_string(projection_.weight.rows()));
    }
    Tensor<T> v = projection_(v0);
    for (const auto& b : blocks_) {
      Tensor<T> attended = b.self_attn(v, v, v, nullptr, probe(diag, "grounding.self"));
      v = sublayer(v, attended, b.attn_norm, dropout);
      v = sublayer(v, b.ffn(v), b.ffn_norm, dropout);
    }
    return v;
  }

 private:
  Linear<T> projection_;
  std::vector<GroundingBlock<T>> blocks_;
};

}  // namespace mitvg
