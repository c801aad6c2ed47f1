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
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mitvg/model.hpp"

namespace mitvg {

/// Warmup-then-inverse-sqrt schedule:
/// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5).
inline double lr_at(std::size_t step, std::size_t d_model, std::size_t warmup) {
  if (step == 0) throw ContractError("lr_at: steps are 1-based");
  if (warmup == 0) throw ContractError("lr_at: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d_model), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

template <typename T>
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.98;
  static constexpr double kEps = 1e-9;

  explicit Adam(const ParamStore<T>& params) {
    for (const auto& p : params.all()) {
      first_.emplace_back(p.tensor.numel(), T(0));
      second_.emplace_back(p.tensor.numel(), T(0));
    }
  }

  std::size_t steps() const { return steps_; }
  std::vector<std::vector<T>>& first_moments() { return first_; }
  std::vector<std::vector<T>>& second_moments() { return second_; }
  const std::vector<std::vector<T>>& first_moments() const { return first_; }
  const std::vector<std::vector<T>>& second_moments() const { return second_; }
  void set_steps(std::size_t s) { steps_ = s; }

  /// One bias-corrected Adam update. Parameters without a gradient buffer
  /// are treated as having a zero gradient.
  void step(ParamStore<T>& params, double lr) {
    if (params.size() != first_.size()) throw ContractError("Adam: parameter set changed");
    ++steps_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
    std::size_t idx = 0;
    for (const auto& p : params.all()) {
      Tensor<T> t = p.tensor;
      auto values = t.mutable_values();
      auto grad = t.grad();
      auto& m = first_[idx];
      auto& v = second_[idx];
      ++idx;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
        m[i] = static_cast<T>(kBeta1 * m[i] + (1.0 - kBeta1) * g);
        v[i] = static_cast<T>(kBeta2 * v[i] + (1.0 - kBeta2) * g * g);
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        values[i] = static_cast<T>(values[i] - lr * mhat / (std::sqrt(vhat) + kEps));
      }
    }
  }

 private:
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
  std::size_t steps_ = 0;
};

struct TrainRecord {
  std::size_t step = 0;
  double loss = 0;
  double lr = 0;
};

/// One (dialogue, round) training instance.
struct TrainInstance {
  std::size_t example = 0;
  std::size_t round = 0;
};

inline std::vector<TrainInstance> training_instances(const std::vector<EncodedDialogue>& data) {
  std::vector<TrainInstance> out;
  for (std::size_t e = 0; e < data.size(); ++e)
    for (std::size_t t = 1; t <= data[e].rounds.size(); ++t) {
      const auto& r = data[e].rounds[t - 1];
      if (r.answer && !r.answer->empty()) out.push_back({e, t});
    }
  return out;
}

/// Single-writer training loop: each optimizer step consumes grad_accum
/// instances in a per-epoch shuffled order derived from the seed, so a
/// resumed run replays the same sequence.
template <typename T>
class Trainer {
 public:
  Trainer(MitvgModel<T>& model, const std::vector<EncodedDialogue>& data, const FeatureStore& features)
      : model_(model), data_(data), features_(features), adam_(model.params()),
        instances_(training_instances(data)) {
    if (instances_.empty()) throw DataError("training set has no answered rounds");
    for (const auto& ex : data_) features_.at(ex.image_id);
  }

  Adam<T>& optimizer() { return adam_; }
  const Adam<T>& optimizer() const { return adam_; }
  std::size_t step_count() const { return adam_.steps(); }
  std::size_t instance_count() const { return instances_.size(); }

  /// The instance consumed at global position `g` (0-based).
  TrainInstance instance_at(std::size_t g) {
    const std::size_t n = instances_.size();
    const std::size_t epoch = g / n;
    if (epoch != cached_epoch_ || order_.empty()) {
      order_.resize(n);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      std::mt19937_64 rng(model_.config().seed * 1000003ULL + epoch);
      std::shuffle(order_.begin(), order_.end(), rng);
      cached_epoch_ = epoch;
    }
    return instances_[order_[g % n]];
  }

  TrainRecord step() {
    const auto& cfg = model_.config();
    const std::size_t next = adam_.steps() + 1;
    const std::size_t accum = cfg.grad_accum;
    model_.params().zero_grad();
    model_.set_training(true);
    double total = 0;
    for (std::size_t a = 0; a < accum; ++a) {
      const TrainInstance inst = instance_at(adam_.steps() * accum + a);
      const auto& ex = data_[inst.example];
      Tape<T> tape;
      TapeScope<T> scope(tape);
      Tensor<T> loss = model_.forward_loss(features_.at(ex.image_id), ex, inst.round, cfg.use_vg);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        model_.set_training(false);
        throw NumericError("non-finite loss at step " + std::to_string(next) + " (image " +
                           std::to_string(ex.image_id) + ", round " + std::to_string(inst.round) + ")");
      }
      total += value;
      tape.backward(accum == 1 ? loss : scale(loss, static_cast<T>(1.0 / static_cast<double>(accum))));
    }
    model_.set_training(false);
    const double lr = lr_at(next, cfg.d_model, cfg.warmup_steps);
    adam_.step(model_.params(), lr);
    return {next, total / static_cast<double>(accum), lr};
  }

  /// Runs until the optimizer has taken `until_step` steps.
  std::vector<TrainRecord> run(std::size_t until_step, const std::function<void(const TrainRecord&)>& on_step = {}) {
    std::vector<TrainRecord> log;
    while (adam_.steps() < until_step) {
      log.push_back(step());
      if (on_step) on_step(log.back());
    }
    return log;
  }

 private:
  MitvgModel<T>& model_;
  const std::vector<EncodedDialogue>& data_;
  const FeatureStore& features_;
  Adam<T> adam_;
  std::vector<TrainInstance> instances_;
  std::vector<std::size_t> order_;
  std::size_t cached_epoch_ = 0;
};

}  // namespace mitvg
