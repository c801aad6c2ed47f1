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
 * @file synthetic.hpp
 * @brief Closed-world visual dialogue generator with exact grounding.
 *
 * Each image holds 3..6 objects with a color, a shape and an item count.
 * Questions name an object by one attribute and ask for another; several
 * objects may share the naming attribute, so the text alone can be
 * ambiguous while the grounding index is not. Every fourth round asks
 * "anything else ?", grounds nothing, and is answered "no".
 */

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mitvg/dataset.hpp"
#include "mitvg/text.hpp"

namespace mitvg {

struct SyntheticObject {
  std::size_t color = 0;
  std::size_t shape = 0;
  std::size_t count = 0;  // 0-based: item count is count + 1
};

struct SyntheticWorld {
  static constexpr std::array<const char*, 6> kColors = {"red", "blue", "green", "yellow", "white", "black"};
  static constexpr std::array<const char*, 6> kShapes = {"cube", "ball", "cone", "ring", "box", "star"};
  static constexpr std::size_t kCounts = 5;
  static constexpr std::size_t kMinObjects = 3;
  static constexpr std::size_t kMaxObjects = 6;
  static constexpr std::size_t kCandidates = 100;
  static constexpr double kFeatureNoise = 0.1;

  std::size_t feature_dim = 64;

  static std::size_t attribute_width() { return kColors.size() + kShapes.size() + kCounts; }

  /// Attribute one-hots tiled across `feature_dim` columns plus gaussian noise.
  std::vector<float> object_features(const SyntheticObject& o, std::mt19937_64& rng) const {
    std::vector<float> onehot(attribute_width(), 0.0f);
    onehot[o.color] = 1.0f;
    onehot[kColors.size() + o.shape] = 1.0f;
    onehot[kColors.size() + kShapes.size() + o.count] = 1.0f;
    std::normal_distribution<double> noise(0.0, kFeatureNoise);
    std::vector<float> row(feature_dim);
    for (std::size_t d = 0; d < feature_dim; ++d) {
      row[d] = onehot[d % onehot.size()] + static_cast<float>(noise(rng));
    }
    return row;
  }

  /// Every answer string the candidate lists draw from (raw, pre-tokenizer).
  static std::vector<std::string> answer_pool() {
    std::vector<std::string> pool;
    for (auto c : kColors) pool.emplace_back(c);
    for (auto s : kShapes) pool.emplace_back(s);
    for (std::size_t n = 1; n <= kCounts; ++n) pool.push_back(std::to_string(n));
    pool.emplace_back("no");
    for (auto c : kColors)
      for (auto s : kShapes) pool.push_back(std::string(c) + " " + s);
    for (std::size_t n = 1; n <= kCounts; ++n)
      for (auto s : kShapes) pool.push_back(std::to_string(n) + " " + s);
    for (std::size_t n = 1; n <= kCounts; ++n)
      for (auto c : kColors) pool.push_back(std::to_string(n) + " " + c);
    return pool;
  }
};

struct SyntheticSplit {
  std::vector<DialogueExample> examples;
  FeatureStore features;
};

namespace detail {

inline CandidateSet make_candidates(const std::string& gt_raw, const std::vector<std::string>& pool,
                                    std::mt19937_64& rng) {
  const auto gt = normalize_and_tokenize(gt_raw);
  std::vector<std::string> distractors;
  for (const auto& p : pool) {
    if (normalize_and_tokenize(p) != gt) distractors.push_back(p);
  }
  std::shuffle(distractors.begin(), distractors.end(), rng);
  distractors.resize(SyntheticWorld::kCandidates - 1);
  std::uniform_int_distribution<std::size_t> pos(0, SyntheticWorld::kCandidates - 1);
  const std::size_t gt_index = pos(rng);
  CandidateSet cs;
  cs.gt_index = gt_index;
  std::size_t d = 0;
  for (std::size_t i = 0; i < SyntheticWorld::kCandidates; ++i) {
    const auto toks = i == gt_index ? gt : normalize_and_tokenize(distractors[d++]);
    double rel = 0.0;
    if (i == gt_index) {
      rel = 1.0;
    } else if (std::find_first_of(toks.begin(), toks.end(), gt.begin(), gt.end()) != toks.end()) {
      rel = 0.5;
    }
    cs.answers.push_back(toks);
    cs.relevance.push_back(rel);
  }
  return cs;
}

}  // namespace detail

/// Generates `n_dialogues` dialogues of `rounds` rounds each. Image ids are
/// first_id, first_id + 1, ... Deterministic for a given seed.
inline SyntheticSplit generate_synthetic(std::size_t n_dialogues, std::size_t rounds, std::uint64_t seed,
                                         std::size_t feature_dim = 64, std::uint64_t first_id = 1) {
  if (n_dialogues == 0) throw ContractError("generate_synthetic: need at least one dialogue");
  SyntheticWorld world{feature_dim};
  const auto pool = SyntheticWorld::answer_pool();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> n_objects(SyntheticWorld::kMinObjects, SyntheticWorld::kMaxObjects);
  std::uniform_int_distribution<std::size_t> color(0, SyntheticWorld::kColors.size() - 1);
  std::uniform_int_distribution<std::size_t> shape(0, SyntheticWorld::kShapes.size() - 1);
  std::uniform_int_distribution<std::size_t> count(0, SyntheticWorld::kCounts - 1);
  std::uniform_int_distribution<int> kind(0, 2);

  SyntheticSplit split;
  for (std::size_t n = 0; n < n_dialogues; ++n) {
    const std::size_t k = n_objects(rng);
    std::vector<SyntheticObject> objects(k);
    for (auto& o : objects) o = {color(rng), shape(rng), count(rng)};

    ImageFeatures img;
    img.image_id = first_id + n;
    img.objects = k;
    img.dim = feature_dim;
    for (const auto& o : objects) {
      auto row = world.object_features(o, rng);
      img.values.insert(img.values.end(), row.begin(), row.end());
    }

    DialogueExample ex;
    ex.image_id = img.image_id;
    std::string caption;
    for (std::size_t i = 0; i < k; ++i) {
      if (i > 0) caption += (i + 1 == k) ? " and " : " , ";
      caption += std::string("a ") + SyntheticWorld::kColors[objects[i].color] + " " +
                 SyntheticWorld::kShapes[objects[i].shape];
    }
    caption += " .";
    ex.caption = normalize_and_tokenize(caption);

    for (std::size_t r = 1; r <= rounds; ++r) {
      DialogueRound round;
      std::string question, answer;
      if (r % 4 == 0) {
        question = "anything else ?";
        answer = "no";
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        const std::size_t target = pick(rng);
        const auto& o = objects[target];
        switch (kind(rng)) {
          case 0:
            question = std::string("what color is the ") + SyntheticWorld::kShapes[o.shape] + " ?";
            answer = SyntheticWorld::kColors[o.color];
            break;
          case 1:
            question = std::string("what shape is the ") + SyntheticWorld::kColors[o.color] + " one ?";
            answer = SyntheticWorld::kShapes[o.shape];
            break;
          default:
            question = std::string("how many items in the ") + SyntheticWorld::kShapes[o.shape] + " pile ?";
            answer = std::to_string(o.count + 1);
            break;
        }
        round.grounding = {target};
      }
      round.question = normalize_and_tokenize(question);
      round.answer = normalize_and_tokenize(answer);
      round.candidates = detail::make_candidates(answer, pool, rng);
      ex.rounds.push_back(std::move(round));
    }
    split.examples.push_back(std::move(ex));
    split.features.add(std::move(img));
  }
  return split;
}

}  // namespace mitvg
