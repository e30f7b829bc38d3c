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

#ifndef CROSSCTX_LAYERS_H_
#define CROSSCTX_LAYERS_H_

#include <string>

#include "crossctx/autodiff.h"
#include "crossctx/conv.h"
#include "crossctx/rng.h"

namespace crossctx {

inline constexpr double kLeakySlope = 0.01;

// A convolution whose weight and bias live in a ParameterSet as
// "<name>.w" and "<name>.b". Masked taps are zeroed at creation and never
// receive gradient, so they stay zero through training.
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  // He-uniform weights, bound sqrt(6 / fan_in); zero bias.
  Conv2dLayer(ParameterSet& params, const std::string& name, const ConvSpec& spec, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  Tensor forward(const Tensor& x) const;

  const ConvSpec& spec() const { return spec_; }
  const Tensor& weight() const { return weight_->value; }
  const Tensor& bias() const { return bias_->value; }
  Parameter& weight_param() const { return *weight_; }
  Parameter& bias_param() const { return *bias_; }
  std::size_t parameter_count() const { return weight_->value.size() + bias_->value.size(); }

 private:
  ConvSpec spec_;
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

// out = x + conv2(leaky(conv1(x))), both convs 3x3 with equal in/out widths.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParameterSet& params, const std::string& name, int channels, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  Tensor forward(const Tensor& x) const;

  const Conv2dLayer& conv1() const { return conv1_; }
  const Conv2dLayer& conv2() const { return conv2_; }
  std::size_t parameter_count() const {
    return conv1_.parameter_count() + conv2_.parameter_count();
  }

 private:
  Conv2dLayer conv1_;
  Conv2dLayer conv2_;
};

struct ResidualWeights {
  Tensor w1, b1, w2, b2;
};

// Functional form: input + conv(leaky(conv(input))) with 3x3 same convs.
Tensor residual_block_forward(const Tensor& input, const ResidualWeights& weights,
                              double slope = kLeakySlope);

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);

}  // namespace crossctx

#endif  // CROSSCTX_LAYERS_H_
