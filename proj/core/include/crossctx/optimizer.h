// Copyright 2026 The crossctx Authors. All Rights Reserved.
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

#ifndef CROSSCTX_OPTIMIZER_H_
#define CROSSCTX_OPTIMIZER_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "crossctx/autodiff.h"

namespace crossctx {

struct AdamMoments {
  Tensor m;
  Tensor v;
};

struct AdamState {
  std::int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, AdamMoments> moments;
};

// One bias-corrected Adam update of `param` in place. `step` is the already
// incremented step count (t >= 1).
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 std::int64_t step, const AdamState& hyper);

// Increments state.step and updates every parameter from its grad.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace crossctx

#endif  // CROSSCTX_OPTIMIZER_H_
