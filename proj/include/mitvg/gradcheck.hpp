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
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mitvg/tensor.hpp"

namespace mitvg {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::map<std::string, double> per_param;  // max error per parameter
};

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences (f(x+h) - f(x-h)) / 2h, one coordinate at a time.
///
/// `f` must rebuild its forward pass from the current parameter values on
/// every call. The relative error per coordinate is
/// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>()>& f,
                           const std::vector<NamedTensor<T>>& params, T h = T(1e-5)) {
  // Analytic pass.
  for (auto p : params) p.tensor.zero_grad();  // handles share storage
  T base;
  {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> loss = f();
    base = loss.item();
    tape.backward(loss);
  }
  {
    NoTapeScope<T> off;
    T again = f().item();
    if (again != base) {
      throw ContractError("grad_check: function is not deterministic (" + std::to_string(base) +
                          " vs " + std::to_string(again) + ")");
    }
  }

  GradCheckReport report;
  NoTapeScope<T> off;
  for (auto p : params) {
    auto values = p.tensor.mutable_values();
    std::vector<T> analytic(values.size(), T(0));
    if (p.tensor.has_grad()) {
      auto g = p.tensor.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    double worst = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = saved + h;
      const T up = f().item();
      values[i] = saved - h;
      const T down = f().item();
      values[i] = saved;
      const double fd = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * h);
      const double ad = analytic[i];
      const double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      worst = std::max(worst, err);
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = err;
        report.worst_param = p.name;
        report.worst_index = i;
      }
      ++report.checked;
    }
    report.per_param[p.name] = worst;
  }
  return report;
}

}  // namespace mitvg
