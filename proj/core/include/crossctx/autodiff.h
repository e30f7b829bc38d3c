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

// Reverse-mode differentiation over a recorded tape.
//
// Ops are appended to a Tape in evaluation order, which is therefore a
// topological order. Tape::backward walks it once in reverse. Gradients of
// Parameters are accumulated into Parameter::grad, so several tapes (one per
// batch item) may contribute to the same step; ParameterSet::zero_grad resets
// them. A given tape may only be backpropagated once.

#ifndef CROSSCTX_AUTODIFF_H_
#define CROSSCTX_AUTODIFF_H_

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crossctx/conv.h"
#include "crossctx/tensor.h"

namespace crossctx {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Owns named parameters with stable addresses.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  Parameter& add(std::string name, Tensor init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  std::size_t element_count() const;
  // Elements of parameters whose name starts with `prefix`.
  std::size_t element_count(const std::string& prefix) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> index_;
};

class Tape;

// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape& tape, const Tensor& grad_out)>;

  // With record_gradients = false no closures are kept (inference only).
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is kept on the tape (see grad()).
  Var input(Tensor value, bool requires_grad = true);
  // Leaf whose gradient is accumulated into p.grad.
  Var parameter(Parameter& p);

  // Appends an op result; `fn` receives the output gradient and must route it
  // to the parents through accumulate().
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var push(Tensor value, std::span<const Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const {
    return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad;
  }
  // Gradient of an input() leaf after backward().
  const Tensor& grad(Var v) const;

  // Adds g into the gradient of v (no-op if v does not require grad).
  void accumulate(Var v, const Tensor& g);
  // Mutable gradient buffer of v, zero-initialized on first use.
  Tensor& grad_buffer(Var v);

  // loss must hold exactly one element. Throws std::logic_error on a second
  // call for the same tape.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var append(Node node);

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

namespace ad {

Var conv2d(Var x, Var weights, Var bias, const ConvSpec& spec);
Var leaky_relu(Var x, double slope);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double k);
Var softplus(Var x);
Var clamp(Var x, double lo, double hi);
Var sum(Var x);
Var concat_channels(std::span<const Var> parts);
Var slice_channels(Var x, int begin, int end);
// Nearest-neighbour resize of a (C,H,W) map to (C,out_h,out_w).
Var upsample_nearest(Var x, int out_h, int out_w);
Var mse(Var a, Var b);

// Bits of y under a Gaussian N(mu, sigma^2) integrated over [y-0.5, y+0.5],
// summed over all elements. Likelihoods are floored at kLikelihoodFloor.
Var gaussian_rate_bits(Var y, Var mu, Var sigma);
// Bits of z under a per-channel logistic with location loc[c] and scale
// exp(log_scale[c]), integrated over unit bins.
Var logistic_rate_bits(Var z, Var loc, Var log_scale);

inline constexpr double kLikelihoodFloor = 1e-9;

}  // namespace ad

double leaky_relu(double x, double slope);
double softplus(double x);

}  // namespace crossctx

#endif  // CROSSCTX_AUTODIFF_H_
