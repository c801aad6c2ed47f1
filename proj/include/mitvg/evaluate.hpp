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

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mitvg/metrics.hpp"
#include "mitvg/model.hpp"

namespace mitvg {

/// Worker count from MITVG_THREADS (default 1, minimum 1).
inline std::size_t worker_threads() {
  const char* env = std::getenv("MITVG_THREADS");
  if (!env) return 1;
  try {
    const long n = std::stol(env);
    return n < 1 ? 1 : static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    return 1;
  }
}

/// Log-likelihood of every candidate of round t.
template <typename T>
std::vector<double> score_candidates(const MitvgModel<T>& model, const ImageFeatures& img, const EncodedDialogue& ex,
                                     std::size_t t, bool use_vg) {
  NoTapeScope<T> off;
  const auto& round = ex.rounds.at(t - 1);
  if (!round.has_candidates()) {
    throw DataError("image " + std::to_string(ex.image_id) + " round " + std::to_string(t) + ": no candidate answers");
  }
  const QuestionContext<T> q = model.encode_dialogue(img, ex, t, use_vg);
  std::vector<double> scores;
  scores.reserve(round.candidates.size());
  for (const auto& c : round.candidates) scores.push_back(static_cast<double>(model.score_candidate(c, q)));
  return scores;
}

/// Ranks the candidates of every round that carries a candidate list.
/// Questions are split across `threads` workers over the frozen model;
/// results are independent of the worker count.
template <typename T>
RankingReport evaluate(const MitvgModel<T>& model, const std::vector<EncodedDialogue>& data,
                       const FeatureStore& features, bool use_vg, std::size_t threads = 1) {
  struct Job {
    std::size_t example;
    std::size_t round;
  };
  std::vector<Job> jobs;
  for (std::size_t e = 0; e < data.size(); ++e)
    for (std::size_t t = 1; t <= data[e].rounds.size(); ++t)
      if (data[e].rounds[t - 1].has_candidates()) jobs.push_back({e, t});
  if (jobs.empty()) throw DataError("evaluation set has no rounds with candidate answers");

  std::vector<QuestionResult> results(jobs.size());
  auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t j = begin; j < jobs.size(); j += stride) {
      const auto& ex = data[jobs[j].example];
      const auto& round = ex.rounds[jobs[j].round - 1];
      const auto scores = score_candidates(model, features.at(ex.image_id), ex, jobs[j].round, use_vg);
      QuestionResult r;
      r.image_id = ex.image_id;
      r.round = jobs[j].round;
      r.rank = rank_of_gt(scores, round.gt_index);
      if (!round.relevance.empty()) r.ndcg = ndcg(scores, round.relevance);
      results[j] = r;
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, jobs.size()));
  if (threads == 1) {
    run(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(w, threads);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return RankingReport::from(std::move(results));
}

/// Fraction of answer + EOS positions whose teacher-forced argmax equals
/// the target, over every answered round.
template <typename T>
double token_accuracy(const MitvgModel<T>& model, const std::vector<EncodedDialogue>& data,
                      const FeatureStore& features, bool use_vg) {
  NoTapeScope<T> off;
  std::size_t hit = 0, total = 0;
  for (const auto& ex : data) {
    const auto& img = features.at(ex.image_id);
    for (std::size_t t = 1; t <= ex.rounds.size(); ++t) {
      const auto& answer = ex.rounds[t - 1].answer;
      if (!answer || answer->empty()) continue;
      const Tensor<T> logits =
          model.decoder_logits(MitvgModel<T>::shifted(*answer), model.encode_dialogue(img, ex, t, use_vg));
      const auto targets = MitvgModel<T>::with_eos(*answer);
      const std::size_t v = logits.cols();
      for (std::size_t z = 0; z < targets.size(); ++z) {
        auto row = logits.values().subspan(z * v, v);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        hit += best == targets[z];
        ++total;
      }
    }
  }
  if (total == 0) throw DataError("token_accuracy: no answered rounds");
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace mitvg
