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

#include "crossctx/optimizer.h"

#include <cmath>
#include <stdexcept>

namespace crossctx {

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
                 std::int64_t step, const AdamState& hyper) {
  if (param.size() != grad.size() || moments.m.size() != param.size() ||
      moments.v.size() != param.size()) {
    throw ShapeError("adam_update: parameter, gradient and moment sizes differ");
  }
  if (step < 1) throw std::invalid_argument("adam_update: step must be >= 1");
  if (!(hyper.lr > 0.0)) throw std::invalid_argument("adam_update: lr must be positive");
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = moments.m[i];
    double& v = moments.v[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    param[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

void adam_step(ParameterSet& params, AdamState& state) {
  ++state.step;
  for (Parameter* p : params.all()) {
    auto it = state.moments.find(p->name);
    if (it == state.moments.end()) {
      it = state.moments
               .emplace(p->name, AdamMoments{Tensor(p->value.dims()), Tensor(p->value.dims())})
               .first;
    }
    if (!it->second.m.same_shape(p->value)) {
      throw ShapeError("adam moments for " + p->name + " have the wrong shape");
    }
    ensure_finite(p->grad, "adam gradient");
    adam_update(p->value.values(), p->grad.values(), it->second, state.step, state);
  }
}

}  // namespace crossctx
