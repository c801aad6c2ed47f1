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

#include <deque>
#include <string>
#include <vector>

#include "mitvg/ops.hpp"

namespace mitvg {

/// Captures attention weights and gate activations from a forward pass.
template <typename T>
struct Diagnostics {
  struct Entry {
    std::string tag;
    AttentionProbe<T> probe;
  };
  std::deque<Entry> attention;  // deque: pointers stay valid on growth
  std::vector<std::vector<T>> alpha;
  std::vector<std::vector<T>> beta;

  AttentionProbe<T>* next(const std::string& tag) {
    attention.push_back({tag, {}});
    return &attention.back().probe;
  }
};

template <typename T>
AttentionProbe<T>* probe(Diagnostics<T>* diag, const char* tag) {
  return diag ? diag->next(tag) : nullptr;
}

}  // namespace mitvg
