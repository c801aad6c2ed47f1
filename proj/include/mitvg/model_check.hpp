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

#include "mitvg/gradcheck.hpp"
#include "mitvg/model.hpp"

namespace mitvg {

/// Sum of the per-round answer losses over every answered round.
template <typename T>
Tensor<T> dialogue_loss(const MitvgModel<T>& model, const ImageFeatures& img, const EncodedDialogue& ex,
                        bool use_vg) {
  Tensor<T> total;
  bool any = false;
  for (std::size_t t = 1; t <= ex.rounds.size(); ++t) {
    const auto& answer = ex.rounds[t - 1].answer;
    if (!answer || answer->empty()) continue;
    Tensor<T> loss = model.forward_loss(img, ex, t, use_vg);
    total = any ? add(total, loss) : loss;
    any = true;
  }
  if (!any) throw DataError("image " + std::to_string(ex.image_id) + ": no answered rounds");
  return total;
}

/// Finite-difference check of every model parameter on the summed
/// dialogue loss. Dropout must be off for the loss to be deterministic.
template <typename T>
GradCheckReport model_grad_check(MitvgModel<T>& model, const ImageFeatures& img, const EncodedDialogue& ex,
                                 bool use_vg, T h = T(1e-5)) {
  model.set_training(false);
  return grad_check<T>([&] { return dialogue_loss(model, img, ex, use_vg); }, model.params().all(), h);
}

}  // namespace mitvg
