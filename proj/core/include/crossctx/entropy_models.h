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

// Probability models used for coding.
//
// Latents are coded as residuals r = y - round(mu) against a zero-centred
// discretized Gaussian whose scale is snapped up to the nearest entry of a
// log-spaced ScaleTable. Each table entry carries an integer CDF of total
// 2^precision over the alphabet [-L, L] plus one escape symbol; residuals
// outside the alphabet are sent as escape + sign + Exp-Golomb magnitude.
// Hyper latents use a per-channel discretized logistic (FactorizedPrior).

#ifndef CROSSCTX_ENTROPY_MODELS_H_
#define CROSSCTX_ENTROPY_MODELS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "crossctx/latent.h"
#include "crossctx/tensor.h"

namespace crossctx {

inline constexpr double kSigmaMin = 0.11;
inline constexpr double kSigmaMax = 256.0;

struct ScaleTableConfig {
  double sigma_min = kSigmaMin;
  double sigma_max = kSigmaMax;
  int num_scales = 64;
  int precision = 16;
  // Alphabet half-width L for latent residuals.
  int alphabet_half = 16;
  // Alphabet half-width for hyper latents.
  int hyper_alphabet_half = 16;

  void validate() const;
  friend bool operator==(const ScaleTableConfig&, const ScaleTableConfig&) = default;
};

// Per-element Gaussian parameters over a channel segment.
struct GaussianField {
  Tensor mu;
  Tensor sigma;

  void validate(double sigma_min = kSigmaMin) const;
};

// Counts how often a scale below the clamp was raised to it.
struct ClampStats {
  std::size_t clamped = 0;
};

// Phi((s + 0.5 - mu) / sigma) - Phi((s - 0.5 - mu) / sigma), with sigma raised
// to sigma_min when below it (recorded in `stats` if given).
double discretized_gaussian_prob(std::int64_t symbol, double mu, double sigma,
                                 ClampStats* stats = nullptr, double sigma_min = kSigmaMin);

// Integer CDF with cdf[0] = 0, cdf[n] = 2^precision, every symbol at least
// one count, remaining mass shared by largest remainder (ties to the lower
// index). Probabilities are normalized by their sum first.
std::vector<std::uint32_t> quantize_cdf(std::span<const double> probs, int precision);

// Symbols [-L, L] map to indices [0, 2L]; index 2L+1 is the escape.
class SymbolAlphabet {
 public:
  explicit SymbolAlphabet(int half_width);
  int half_width() const { return half_; }
  int size() const { return 2 * half_ + 2; }
  int escape_index() const { return 2 * half_ + 1; }
  bool representable(std::int64_t residual) const {
    return residual >= -half_ && residual <= half_;
  }
  int index_of(std::int64_t residual) const {
    return representable(residual) ? static_cast<int>(residual + half_) : escape_index();
  }
  std::int64_t residual_of(int index) const { return index - half_; }

 private:
  int half_;
};

class ScaleTable {
 public:
  explicit ScaleTable(const ScaleTableConfig& config);

  const ScaleTableConfig& config() const { return config_; }
  const SymbolAlphabet& alphabet() const { return alphabet_; }
  int size() const { return static_cast<int>(sigmas_.size()); }
  double sigma(int index) const { return sigmas_[static_cast<std::size_t>(index)]; }
  std::span<const double> sigmas() const { return sigmas_; }
  std::span<const std::uint32_t> cdf(int index) const {
    return cdfs_[static_cast<std::size_t>(index)];
  }

 private:
  ScaleTableConfig config_;
  SymbolAlphabet alphabet_;
  std::vector<double> sigmas_;
  std::vector<std::vector<std::uint32_t>> cdfs_;
};

// Smallest index whose sigma is >= the input, clamped to [0, size-1].
int sigma_to_table_index(double sigma, const ScaleTable& table);

// round() with ties away from zero, clamped to +-2^30.
std::int64_t round_mean(double mu);

inline int exp_golomb_length(std::uint64_t v) {
  int k = 0;
  while (((v + 1) >> (k + 1)) != 0) ++k;
  return 2 * k + 1;
}

// Bits the range coder ideally spends on `symbol` given (mu, sigma): the
// table-CDF cost of the residual, plus sign and Exp-Golomb bits for escapes.
double table_rate_bits(std::int64_t symbol, double mu, double sigma, const ScaleTable& table);

// Sum over elements of -log2 p(symbol) with the exact (continuous mu,
// unquantized) discretized Gaussian; probabilities floored at 1e-300.
double latent_rate_bits(const LatentTensor& latents, const GaussianField& field);

// Per-channel discretized logistic for hyper latents. Channel c is centred at
// round(loc[c]) and its CDF spans [center-L, center+L] plus escape.
class FactorizedPrior {
 public:
  FactorizedPrior(Tensor loc, Tensor log_scale, int half_width, int precision);

  int channels() const { return static_cast<int>(centers_.size()); }
  const SymbolAlphabet& alphabet() const { return alphabet_; }
  std::int64_t center(int c) const { return centers_[static_cast<std::size_t>(c)]; }
  std::span<const std::uint32_t> cdf(int c) const { return cdfs_[static_cast<std::size_t>(c)]; }
  int precision() const { return precision_; }

  // Exact (unquantized) probability of value z in channel c.
  double prob(int c, std::int64_t z) const;
  // Ideal coded bits of value z in channel c with the integer CDF.
  double table_bits(int c, std::int64_t z) const;

 private:
  Tensor loc_;
  Tensor log_scale_;
  SymbolAlphabet alphabet_;
  int precision_;
  std::vector<std::int64_t> centers_;
  std::vector<std::vector<std::uint32_t>> cdfs_;
};

}  // namespace crossctx

#endif  // CROSSCTX_ENTROPY_MODELS_H_
