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

#ifndef CROSSCTX_PROBABILITY_H_
#define CROSSCTX_PROBABILITY_H_

#include <cmath>

namespace crossctx {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Probability mass of a unit bin centred at distance `offset` from the mode,
// together with its partial derivatives.
struct BinMass {
  double p;
  double d_offset;  // dp / d|offset|
  double d_scale;   // dp / d(scale parameter)
};

// Gaussian N(0, sigma^2) integrated over [v-0.5, v+0.5], evaluated on
// v = |offset| so the result is exactly symmetric in the sign of offset.
inline BinMass gaussian_bin(double offset, double sigma) {
  const double v = std::fabs(offset);
  const double a = (0.5 - v) / sigma;
  const double b = (-0.5 - v) / sigma;
  const double pa = normal_pdf(a);
  const double pb = normal_pdf(b);
  return {normal_cdf(a) - normal_cdf(b), -(pa - pb) / sigma, -(a * pa - b * pb) / sigma};
}

// Logistic with scale s = exp(log_scale); d_scale is taken w.r.t. log_scale.
inline BinMass logistic_bin(double offset, double log_scale) {
  const double s = std::exp(log_scale);
  const double v = std::fabs(offset);
  const double a = (0.5 - v) / s;
  const double b = (-0.5 - v) / s;
  const double sa = sigmoid(a);
  const double sb = sigmoid(b);
  const double da = sa * (1.0 - sa);
  const double db = sb * (1.0 - sb);
  return {sa - sb, -(da - db) / s, -(a * da - b * db)};
}

}  // namespace crossctx

#endif  // CROSSCTX_PROBABILITY_H_
