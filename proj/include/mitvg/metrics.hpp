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
 * @file metrics.hpp
 * @brief Retrieval metrics over candidate answer lists.
 *
 * Candidates are ordered by descending score; equal scores keep the lower
 * candidate index first. All metrics share that ordering.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mitvg/errors.hpp"

namespace mitvg {

namespace detail {

inline void require_finite_scores(std::span<const double> scores) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw DataError("candidate " + std::to_string(i) + " has a NaN score");
  }
}

}  // namespace detail

/// 1 + #candidates scoring strictly higher + #equal-scored candidates with a
/// smaller index.
inline std::size_t rank_of_gt(std::span<const double> scores, std::size_t gt_index) {
  if (gt_index >= scores.size()) {
    throw DataError("gt index " + std::to_string(gt_index) + " outside " + std::to_string(scores.size()) +
                    " candidates");
  }
  detail::require_finite_scores(scores);
  const double gt = scores[gt_index];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > gt || (scores[i] == gt && i < gt_index)) ++rank;
  }
  return rank;
}

/// Candidate indices by descending score, ties by ascending index.
inline std::vector<std::size_t> ranked_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

struct RankSummary {
  std::size_t n = 0;
  double mrr = 0;
  double r1 = 0;
  double r5 = 0;
  double r10 = 0;
  double mean = 0;
};

inline RankSummary aggregate(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw ContractError("aggregate: no ranks");
  RankSummary s;
  s.n = ranks.size();
  for (auto r : ranks) {
    if (r == 0) throw ContractError("aggregate: ranks are 1-based");
    s.mrr += 1.0 / static_cast<double>(r);
    s.r1 += r <= 1 ? 1.0 : 0.0;
    s.r5 += r <= 5 ? 1.0 : 0.0;
    s.r10 += r <= 10 ? 1.0 : 0.0;
    s.mean += static_cast<double>(r);
  }
  const double n = static_cast<double>(s.n);
  s.mrr /= n;
  s.r1 /= n;
  s.r5 /= n;
  s.r10 /= n;
  s.mean /= n;
  return s;
}

/// NDCG@k with k = number of positively relevant candidates. Returns 0 when
/// nothing is relevant.
inline double ndcg(std::span<const double> scores, std::span<const double> relevance) {
  if (scores.size() != relevance.size()) {
    throw DataError("ndcg: " + std::to_string(scores.size()) + " scores vs " + std::to_string(relevance.size()) +
                    " relevance values");
  }
  detail::require_finite_scores(scores);
  for (double r : relevance) {
    if (!(r >= 0.0 && r <= 1.0)) throw DataError("ndcg: relevance outside [0,1]");
  }
  const std::size_t k = static_cast<std::size_t>(
      std::count_if(relevance.begin(), relevance.end(), [](double r) { return r > 0.0; }));
  if (k == 0) return 0.0;
  const auto order = ranked_order(scores);
  std::vector<double> ideal(relevance.begin(), relevance.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double dcg = 0, idcg = 0;
  for (std::size_t p = 0; p < k; ++p) {
    const double discount = std::log2(static_cast<double>(p) + 2.0);
    dcg += relevance[order[p]] / discount;
    idcg += ideal[p] / discount;
  }
  return idcg > 0 ? dcg / idcg : 0.0;
}

struct QuestionResult {
  std::uint64_t image_id = 0;
  std::size_t round = 0;
  std::size_t rank = 0;
  std::optional<double> ndcg;
};

struct RankingReport {
  std::vector<QuestionResult> questions;
  RankSummary summary;
  std::optional<double> ndcg;  // mean over questions that carry relevance

  static RankingReport from(std::vector<QuestionResult> results) {
    RankingReport rep;
    rep.questions = std::move(results);
    std::vector<std::size_t> ranks;
    double ndcg_total = 0;
    std::size_t ndcg_n = 0;
    for (const auto& q : rep.questions) {
      ranks.push_back(q.rank);
      if (q.ndcg) {
        ndcg_total += *q.ndcg;
        ++ndcg_n;
      }
    }
    rep.summary = aggregate(ranks);
    if (ndcg_n) rep.ndcg = ndcg_total / static_cast<double>(ndcg_n);
    return rep;
  }

  nlohmann::ordered_json summary_json() const {
    nlohmann::ordered_json j;
    j["n"] = summary.n;
    j["mrr"] = summary.mrr;
    j["r1"] = summary.r1;
    j["r5"] = summary.r5;
    j["r10"] = summary.r10;
    j["mean"] = summary.mean;
    j["ndcg"] = ndcg ? nlohmann::ordered_json(*ndcg) : nlohmann::ordered_json(nullptr);
    return j;
  }

  /// One JSON object per question.
  std::string detail_jsonl() const {
    std::string out;
    for (const auto& q : questions) {
      nlohmann::ordered_json j;
      j["image_id"] = q.image_id;
      j["round"] = q.round;
      j["rank"] = q.rank;
      j["ndcg"] = q.ndcg ? nlohmann::ordered_json(*q.ndcg) : nlohmann::ordered_json(nullptr);
      out += j.dump();
      out.push_back('\n');
    }
    return out;
  }
};

}  // namespace mitvg
