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
 * @file model.hpp
 * @brief The assembled visual dialogue model: shared embedding, grounding
 *        encoder, incremental encoder, gated decoder and output head.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mitvg/config.hpp"
#include "mitvg/dataset.hpp"
#include "mitvg/diagnostics.hpp"
#include "mitvg/gcad.hpp"
#include "mitvg/grounding.hpp"
#include "mitvg/mite.hpp"
#include "mitvg/nn.hpp"
#include "mitvg/text.hpp"

namespace mitvg {

/// A dialogue with every text field mapped to vocabulary ids.
struct EncodedRound {
  std::vector<std::size_t> question;
  std::optional<std::vector<std::size_t>> answer;
  std::vector<std::size_t> grounding;
  std::vector<std::vector<std::size_t>> candidates;
  std::size_t gt_index = 0;
  std::vector<double> relevance;

  bool has_candidates() const { return !candidates.empty(); }
};

struct EncodedDialogue {
  std::uint64_t image_id = 0;
  std::vector<std::size_t> caption;
  std::vector<EncodedRound> rounds;  // rounds[i - 1] is round i
};

inline EncodedDialogue encode_dialogue_ids(const DialogueExample& ex, const Vocabulary& vocab) {
  EncodedDialogue out;
  out.image_id = ex.image_id;
  out.caption = vocab.encode(ex.caption);
  for (const auto& r : ex.rounds) {
    EncodedRound er;
    er.question = vocab.encode(r.question);
    if (r.answer) er.answer = vocab.encode(*r.answer);
    er.grounding = r.grounding;
    if (r.candidates) {
      for (const auto& c : r.candidates->answers) er.candidates.push_back(vocab.encode(c));
      er.gt_index = r.candidates->gt_index;
      er.relevance = r.candidates->relevance;
    }
    out.rounds.push_back(std::move(er));
  }
  return out;
}

inline std::vector<EncodedDialogue> encode_dataset_ids(const std::vector<DialogueExample>& examples,
                                                       const Vocabulary& vocab) {
  std::vector<EncodedDialogue> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_dialogue_ids(ex, vocab));
  return out;
}

/// Encoder outputs the decoder conditions on for one question.
template <typename T>
struct QuestionContext {
  ContextState<T> context;  // state after encoding the question
  Tensor<T> visual;         // grounding features of the question's round
};

template <typename T>
class MitvgModel {
 public:
  MitvgModel(const ModelConfig& cfg, std::size_t vocab_size) : config_(cfg), vocab_size_(vocab_size) {
    cfg.validate();
    if (vocab_size <= Vocabulary::kNumSpecial) {
      throw ConfigError("vocabulary of " + std::to_string(vocab_size) + " has no ordinary tokens");
    }
    std::mt19937_64 rng(cfg.seed);
    embedding_ = Embedding<T>(params_, "embedding", vocab_size, cfg.d_model, cfg.max_positions(), rng);
    grounding_ = GroundingEncoder<T>(params_, "grounding", cfg, rng);
    mite_ = MiteEncoder<T>(params_, "mite", cfg, rng);
    if (!cfg.tie_final_round) mite_final_ = MiteEncoder<T>(params_, "mite_final", cfg, rng);
    decoder_ = GatedDecoder<T>(params_, "gcad", cfg, vocab_size, rng);
    dropout_.rate = cfg.dropout;
    dropout_.rng.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  }

  const ModelConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const Embedding<T>& embedding() const { return embedding_; }
  const GroundingEncoder<T>& grounding() const { return grounding_; }
  const MiteEncoder<T>& encoder() const { return mite_; }
  const GatedDecoder<T>& decoder() const { return decoder_; }
  GatedDecoder<T>& mutable_decoder() { return decoder_; }

  /// Enables dropout (when configured). Evaluation paths never call this.
  void set_training(bool on) { dropout_.training = on; }

  /// Attention/gate capture for the next forward passes; nullptr disables.
  /// Not for use while other threads share this model.
  void set_diagnostics(Diagnostics<T>* diag) { diag_ = diag; }

  Tensor<T> embed(const std::vector<std::size_t>& ids) const { return embedding_.embed_sequence(ids); }

  /// Encoded grounded objects, or the whole image when the round
  /// grounds nothing or `use_vg` is off.
  Tensor<T> grounding_for_round(const ImageFeatures& img, const EncodedDialogue& ex, std::size_t round,
                                bool use_vg) const {
    if (round == 0 || round > ex.rounds.size()) {
      throw ContractError("grounding_for_round: round " + std::to_string(round) + " outside 1.." +
                          std::to_string(ex.rounds.size()));
    }
    static const std::vector<std::size_t> kAll;
    const auto& indices = use_vg ? ex.rounds[round - 1].grounding : kAll;
    return grounding_.encode(select_grounding<T>(img, indices, round), dropout(), diag_);
  }

  /// History utterance for round i: question tokens, SEP, answer tokens.
  std::vector<std::size_t> history_tokens(const EncodedDialogue& ex, std::size_t round) const {
    const auto& r = ex.rounds.at(round - 1);
    if (!r.answer) {
      throw DataError("image " + std::to_string(ex.image_id) + " round " + std::to_string(round) +
                      ": history round has no answer");
    }
    std::vector<std::size_t> ids = r.question;
    ids.push_back(Vocabulary::kSep);
    ids.insert(ids.end(), r.answer->begin(), r.answer->end());
    return ids;
  }

  ContextState<T> encode_round(const Tensor<T>& grounded, const Tensor<T>& u, const ContextState<T>& c_prev,
                               std::size_t round, bool final_round = false) const {
    const auto& enc = (final_round && !config_.tie_final_round) ? mite_final_ : mite_;
    return enc.encode_round(grounded, u, c_prev, round, dropout(), diag_);
  }

  /// Encodes the caption, history rounds 1..t-1 (question + answer) and the
  /// question of round t, returning the final state and the round's grounding.
  QuestionContext<T> encode_dialogue(const ImageFeatures& img, const EncodedDialogue& ex, std::size_t t,
                                     bool use_vg) const {
    if (t == 0 || t > ex.rounds.size()) {
      throw ContractError("encode_dialogue: round " + std::to_string(t) + " outside 1.." +
                          std::to_string(ex.rounds.size()));
    }
    if (img.image_id != ex.image_id) {
      throw ContractError("encode_dialogue: features of image " + std::to_string(img.image_id) +
                          " given for dialogue on image " + std::to_string(ex.image_id));
    }
    ContextState<T> c = MiteEncoder<T>::initial(embed(ex.caption));
    for (std::size_t i = 1; i < t; ++i) {
      Tensor<T> grounded = grounding_for_round(img, ex, i, use_vg);
      c = encode_round(grounded, embed(history_tokens(ex, i)), c, i);
    }
    Tensor<T> visual = grounding_for_round(img, ex, t, use_vg);
    ContextState<T> final_state = encode_round(visual, embed(ex.rounds[t - 1].question), c, t, true);
    return {final_state, visual};
  }

  /// Logits for decoder input `input_ids` (starting with BOS).
  Tensor<T> decoder_logits(const std::vector<std::size_t>& input_ids, const QuestionContext<T>& q) const {
    return decoder_.logits(embed(input_ids), q.context.state, q.visual, dropout(), diag_);
  }

  /// Word probabilities [Z+1 x vocab]; row z predicts token z of answer+EOS.
  Tensor<T> decode_teacher_forced(const std::vector<std::size_t>& answer, const QuestionContext<T>& q) const {
    if (answer.empty()) throw ContractError("decode_teacher_forced: empty answer");
    return softmax(decoder_logits(shifted(answer), q), 1);
  }

  /// Greedy argmax decoding from BOS; stops at EOS or after max_len tokens.
  std::vector<std::size_t> generate(const QuestionContext<T>& q, std::size_t max_len = 20) const {
    NoTapeScope<T> off;
    std::vector<std::size_t> input = {Vocabulary::kBos};
    std::vector<std::size_t> out;
    while (out.size() < max_len) {
      Tensor<T> logits = decoder_logits(input, q);
      const std::size_t v = logits.cols();
      auto last = logits.values().subspan((logits.rows() - 1) * v, v);
      const std::size_t best =
          static_cast<std::size_t>(std::max_element(last.begin(), last.end()) - last.begin());
      if (best == Vocabulary::kEos) break;
      out.push_back(best);
      input.push_back(best);
    }
    return out;
  }

  /// Log-likelihood of `candidate` followed by EOS (sum over positions, or
  /// mean when length_normalized is configured).
  T score_candidate(const std::vector<std::size_t>& candidate, const QuestionContext<T>& q) const {
    NoTapeScope<T> off;
    std::vector<std::size_t> tokens = candidate;
    if (tokens.size() > config_.max_answer_len) tokens.resize(config_.max_answer_len);
    Tensor<T> logp = log_softmax(decoder_logits(shifted(tokens), q), 1);
    const auto targets = with_eos(tokens);
    const std::size_t v = logp.cols();
    T total = 0;
    for (std::size_t z = 0; z < targets.size(); ++z) total += logp.values()[z * v + targets[z]];
    if (config_.length_normalized) total /= static_cast<T>(targets.size());
    return total;
  }

  /// Mean token cross-entropy of the teacher-forced answer of round t
  /// (answer tokens + EOS; PAD positions excluded).
  Tensor<T> forward_loss(const ImageFeatures& img, const EncodedDialogue& ex, std::size_t t, bool use_vg) const {
    if (t == 0 || t > ex.rounds.size()) {
      throw ContractError("forward_loss: round " + std::to_string(t) + " outside dialogue");
    }
    const auto& answer = ex.rounds[t - 1].answer;
    if (!answer || answer->empty()) {
      throw DataError("image " + std::to_string(ex.image_id) + " round " + std::to_string(t) +
                      ": missing or empty answer");
    }
    QuestionContext<T> q = encode_dialogue(img, ex, t, use_vg);
    Tensor<T> logits = decoder_logits(shifted(*answer), q);
    return softmax_cross_entropy(logits, with_eos(*answer), Vocabulary::kPad);
  }

  static std::vector<std::size_t> shifted(const std::vector<std::size_t>& answer) {
    std::vector<std::size_t> in = {Vocabulary::kBos};
    in.insert(in.end(), answer.begin(), answer.end());
    return in;
  }

  static std::vector<std::size_t> with_eos(const std::vector<std::size_t>& answer) {
    std::vector<std::size_t> out = answer;
    out.push_back(Vocabulary::kEos);
    return out;
  }

 private:
  Dropout<T>* dropout() const { return dropout_.training && dropout_.rate > 0 ? &dropout_ : nullptr; }

  ModelConfig config_;
  std::size_t vocab_size_;
  ParamStore<T> params_;
  Embedding<T> embedding_;
  GroundingEncoder<T> grounding_;
  MiteEncoder<T> mite_;
  MiteEncoder<T> mite_final_;
  GatedDecoder<T> decoder_;
  mutable Dropout<T> dropout_;
  Diagnostics<T>* diag_ = nullptr;
};

}  // namespace mitvg
