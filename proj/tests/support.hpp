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

// Shared fixtures and independent reference implementations for tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mitvg.hpp"

namespace mitvg::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

/// Triple-loop reference product.
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t n,
                                        std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * m + j] += a[i * k + p] * b[p * m + j];
  return c;
}

/// Reference single-head attention: softmax(q k^T / sqrt(d)) v, row by row.
inline std::vector<double> naive_attention(const std::vector<double>& q, const std::vector<double>& k,
                                           const std::vector<double>& v, std::size_t lq, std::size_t lk,
                                           std::size_t d) {
  std::vector<double> out(lq * d, 0.0);
  for (std::size_t i = 0; i < lq; ++i) {
    std::vector<double> s(lk);
    for (std::size_t j = 0; j < lk; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      s[j] = dot / std::sqrt(static_cast<double>(d));
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (auto& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < lk; ++j)
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] += s[j] / z * v[j * d + c];
  }
  return out;
}

template <typename T>
std::vector<double> as_double(const Tensor<T>& t) {
  return std::vector<double>(t.values().begin(), t.values().end());
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

/// A 20-token vocabulary and one dialogue over a 3-object image with 6-wide
/// features and two rounds.
struct TinyWorld {
  Vocabulary vocab;
  FeatureStore features;
  EncodedDialogue dialogue;
  std::vector<EncodedDialogue> data;
};

inline TinyWorld make_tiny_world(std::uint64_t seed = 3, std::size_t rounds = 2) {
  TinyWorld w;
  std::vector<std::string> words = {"a", "red", "cube", "blue", "ball", "what", "color", "is",
                                    "the", "?", "green", "cone", "and", "no", "."};
  w.vocab = Vocabulary::build({words}, 1);
  std::mt19937_64 rng(seed);
  ImageFeatures img;
  img.image_id = 7;
  img.objects = 3;
  img.dim = 6;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t i = 0; i < img.objects * img.dim; ++i) img.values.push_back(static_cast<float>(n01(rng)));
  w.features.add(img);

  auto ids = [&](std::initializer_list<const char*> toks) {
    std::vector<std::size_t> out;
    for (auto t : toks) out.push_back(w.vocab.id(t));
    return out;
  };
  EncodedDialogue& d = w.dialogue;
  d.image_id = 7;
  d.caption = ids({"a", "red", "cube", "and", "a", "blue", "ball", "."});
  const std::vector<std::vector<std::size_t>> questions = {ids({"what", "color", "is", "the", "cube", "?"}),
                                                           ids({"what", "color", "is", "the", "ball", "?"}),
                                                           ids({"what", "color", "is", "the", "cone", "?"})};
  const std::vector<std::vector<std::size_t>> answers = {ids({"red"}), ids({"blue"}), ids({"green"})};
  for (std::size_t r = 0; r < rounds; ++r) {
    EncodedRound er;
    er.question = questions[r % 3];
    er.answer = answers[r % 3];
    er.grounding = {r % 3};
    for (const char* c : {"red", "blue", "green", "no"}) er.candidates.push_back(ids({c}));
    er.gt_index = r % 3;
    er.relevance = {0, 0, 0, 0};
    er.relevance[r % 3] = 1;
    d.rounds.push_back(er);
  }
  w.data = {d};
  return w;
}

/// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("mitvg_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mitvg::testing
