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

#include "mitvg/checkpoint.hpp"
#include "mitvg/config.hpp"
#include "mitvg/dataset.hpp"
#include "mitvg/diagnostics.hpp"
#include "mitvg/errors.hpp"
#include "mitvg/evaluate.hpp"
#include "mitvg/gcad.hpp"
#include "mitvg/gradcheck.hpp"
#include "mitvg/grounding.hpp"
#include "mitvg/metrics.hpp"
#include "mitvg/mite.hpp"
#include "mitvg/model.hpp"
#include "mitvg/model_check.hpp"
#include "mitvg/nn.hpp"
#include "mitvg/ops.hpp"
#include "mitvg/synthetic.hpp"
#include "mitvg/tensor.hpp"
#include "mitvg/text.hpp"
#include "mitvg/train.hpp"
