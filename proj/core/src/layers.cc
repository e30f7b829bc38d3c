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

#include "crossctx/layers.h"

#include <cmath>

namespace crossctx {

Conv2dLayer::Conv2dLayer(ParameterSet& params, const std::string& name, const ConvSpec& spec,
                         Rng& rng)
    : spec_(spec) {
  spec.validate();
  Tensor w(spec.weight_dims());
  const double bound = std::sqrt(6.0 / static_cast<double>(spec.in_ch * spec.kh * spec.kw));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  if (spec.mask != MaskKind::kNone) w = apply_mask(w, spec.mask);
  weight_ = &params.add(name + ".w", std::move(w));
  bias_ = &params.add(name + ".b", Tensor({spec.out_ch}));
}

Var Conv2dLayer::operator()(Tape& tape, Var x) const {
  return ad::conv2d(x, tape.parameter(*weight_), tape.parameter(*bias_), spec_);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  return conv2d_forward(x, weight_->value, bias_->value, spec_);
}

ResidualBlock::ResidualBlock(ParameterSet& params, const std::string& name, int channels,
                             Rng& rng)
    : conv1_(params, name + ".conv1", ConvSpec::same(channels, channels, 3), rng),
      conv2_(params, name + ".conv2", ConvSpec::same(channels, channels, 3), rng) {}

Var ResidualBlock::operator()(Tape& tape, Var x) const {
  Var branch = conv2_(tape, ad::leaky_relu(conv1_(tape, x), kLeakySlope));
  return ad::add(x, branch);
}

Tensor ResidualBlock::forward(const Tensor& x) const {
  return residual_block_forward(
      x, {conv1_.weight(), conv1_.bias(), conv2_.weight(), conv2_.bias()}, kLeakySlope);
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = leaky_relu(x[i], slope);
  return out;
}

Tensor residual_block_forward(const Tensor& input, const ResidualWeights& weights,
                              double slope) {
  if (input.rank() != 3 || weights.w1.rank() != 4 || weights.w2.rank() != 4) {
    throw ShapeError("residual block expects a feature map and 4-D kernels");
  }
  const int c = input.channels();
  if (weights.w1.dim(1) != c || weights.w2.dim(0) != c) {
    throw ShapeError("residual block skip width " + std::to_string(c) +
                     " does not match branch " + weights.w1.shape_string() + " -> " +
                     weights.w2.shape_string());
  }
  const ConvSpec s1 = ConvSpec::same(c, weights.w1.dim(0), weights.w1.dim(2));
  const ConvSpec s2 = ConvSpec::same(weights.w2.dim(1), c, weights.w2.dim(2));
  Tensor branch = conv2d_forward(leaky_relu(conv2d_forward(input, weights.w1, weights.b1, s1),
                                            slope),
                                 weights.w2, weights.b2, s2);
  for (std::size_t i = 0; i < branch.size(); ++i) branch[i] += input[i];
  return branch;
}

}  // namespace crossctx
