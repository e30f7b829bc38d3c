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

#include "crossctx/entropy_models.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "crossctx/probability.h"

namespace crossctx {

void ScaleTableConfig::validate() const {
  if (!(sigma_min > 0.0) || !(sigma_max > sigma_min)) {
    throw std::invalid_argument("scale table needs 0 < sigma_min < sigma_max");
  }
  if (num_scales < 1) throw std::invalid_argument("scale table needs at least one entry");
  if (precision < 2 || precision > 16) {
    throw std::invalid_argument("CDF precision must be in [2, 16]");
  }
  if (alphabet_half < 1 || hyper_alphabet_half < 1) {
    throw std::invalid_argument("alphabet half-width must be >= 1");
  }
  if (2 * alphabet_half + 2 > (1 << precision) || 2 * hyper_alphabet_half + 2 > (1 << precision)) {
    throw std::invalid_argument("alphabet larger than CDF precision allows");
  }
}

void GaussianField::validate(double sigma_min) const {
  ensure_same_shape(mu, sigma, "GaussianField");
  for (double s : sigma.values()) {
    if (!(s >= sigma_min)) throw std::invalid_argument("GaussianField sigma below clamp");
  }
}

double discretized_gaussian_prob(std::int64_t symbol, double mu, double sigma,
                                 ClampStats* stats, double sigma_min) {
  if (!(sigma >= sigma_min)) {
    sigma = sigma_min;
    if (stats != nullptr) ++stats->clamped;
  }
  return gaussian_bin(static_cast<double>(symbol) - mu, sigma).p;
}

std::vector<std::uint32_t> quantize_cdf(std::span<const double> probs, int precision) {
  const std::size_t n = probs.size();
  if (precision < 1 || precision > 31) throw std::invalid_argument("bad CDF precision");
  const std::uint64_t total = std::uint64_t{1} << precision;
  if (n < 2) throw std::invalid_argument("alphabet needs at least two symbols");
  if (n > total) throw std::invalid_argument("alphabet larger than 2^precision");
  double mass = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("negative probability");
    mass += p;
  }
  if (mass > 1.0 + 1e-9) throw std::invalid_argument("probabilities sum above one");
  if (!(mass > 0.0)) throw std::invalid_argument("probabilities sum to zero");

  const std::uint64_t spare = total - n;
  std::vector<std::uint64_t> counts(n);
  std::vector<double> remainder(n);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = probs[i] / mass * static_cast<double>(spare);
    const double whole = std::floor(share);
    counts[i] = 1 + static_cast<std::uint64_t>(whole);
    remainder[i] = share - whole;
    assigned += static_cast<std::uint64_t>(whole);
  }
  // Rounding can overshoot by a count or two when shares are near-integers.
  while (assigned > spare) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < spare; k = (k + 1) % n, ++assigned) ++counts[order[k]];

  std::vector<std::uint32_t> cdf(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    cdf[i + 1] = static_cast<std::uint32_t>(cdf[i] + counts[i]);
  }
  return cdf;
}

SymbolAlphabet::SymbolAlphabet(int half_width) : half_(half_width) {
  if (half_width < 1) throw std::invalid_argument("alphabet half-width must be >= 1");
}

ScaleTable::ScaleTable(const ScaleTableConfig& config)
    : config_(config), alphabet_(config.alphabet_half) {
  config.validate();
  const int s = config.num_scales;
  const double lo = std::log(config.sigma_min);
  const double hi = std::log(config.sigma_max);
  sigmas_.resize(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) {
    sigmas_[static_cast<std::size_t>(i)] =
        s == 1 ? config.sigma_max : std::exp(lo + (hi - lo) * i / (s - 1));
  }
  sigmas_.front() = config.sigma_min;
  sigmas_.back() = config.sigma_max;

  std::vector<double> probs(static_cast<std::size_t>(alphabet_.size()));
  for (double sigma : sigmas_) {
    double mass = 0.0;
    for (int idx = 0; idx < alphabet_.escape_index(); ++idx) {
      const double p = gaussian_bin(static_cast<double>(alphabet_.residual_of(idx)), sigma).p;
      probs[static_cast<std::size_t>(idx)] = p;
      mass += p;
    }
    probs.back() = std::max(0.0, 1.0 - mass);
    cdfs_.push_back(quantize_cdf(probs, config.precision));
  }
}

int sigma_to_table_index(double sigma, const ScaleTable& table) {
  auto sig = table.sigmas();
  auto it = std::lower_bound(sig.begin(), sig.end(), sigma);
  if (it == sig.end()) return table.size() - 1;
  return static_cast<int>(it - sig.begin());
}

std::int64_t round_mean(double mu) {
  constexpr double kLimit = 1073741824.0;
  return static_cast<std::int64_t>(std::round(std::clamp(mu, -kLimit, kLimit)));
}

double table_rate_bits(std::int64_t symbol, double mu, double sigma, const ScaleTable& table) {
  const std::int64_t residual = symbol - round_mean(mu);
  const auto cdf = table.cdf(sigma_to_table_index(sigma, table));
  const SymbolAlphabet& ab = table.alphabet();
  const int idx = ab.index_of(residual);
  const double total = std::ldexp(1.0, table.config().precision);
  double bits = -std::log2((cdf[static_cast<std::size_t>(idx) + 1] -
                            cdf[static_cast<std::size_t>(idx)]) /
                           total);
  if (idx == ab.escape_index()) {
    const auto magnitude = static_cast<std::uint64_t>(std::llabs(residual)) -
                           static_cast<std::uint64_t>(ab.half_width()) - 1;
    bits += 1.0 + exp_golomb_length(magnitude);
  }
  return bits;
}

double latent_rate_bits(const LatentTensor& latents, const GaussianField& field) {
  if (!latents.same_shape(field.mu) || !latents.same_shape(field.sigma)) {
    throw ShapeError("latent_rate_bits: latents and field shapes differ");
  }
  double bits = 0.0;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const double p = discretized_gaussian_prob(latents[i], field.mu[i], field.sigma[i]);
    bits -= std::log2(std::max(p, 1e-300));
  }
  return bits;
}

FactorizedPrior::FactorizedPrior(Tensor loc, Tensor log_scale, int half_width, int precision)
    : loc_(std::move(loc)),
      log_scale_(std::move(log_scale)),
      alphabet_(half_width),
      precision_(precision) {
  if (loc_.size() != log_scale_.size()) {
    throw ShapeError("factorized prior loc/scale length mismatch");
  }
  ensure_finite(loc_, "factorized prior loc");
  ensure_finite(log_scale_, "factorized prior scale");
  std::vector<double> probs(static_cast<std::size_t>(alphabet_.size()));
  for (std::size_t c = 0; c < loc_.size(); ++c) {
    const std::int64_t center = round_mean(loc_[c]);
    centers_.push_back(center);
    double mass = 0.0;
    for (int idx = 0; idx < alphabet_.escape_index(); ++idx) {
      const double z = static_cast<double>(center + alphabet_.residual_of(idx));
      const double p = logistic_bin(z - loc_[c], log_scale_[c]).p;
      probs[static_cast<std::size_t>(idx)] = p;
      mass += p;
    }
    probs.back() = std::max(0.0, 1.0 - mass);
    cdfs_.push_back(quantize_cdf(probs, precision));
  }
}

double FactorizedPrior::prob(int c, std::int64_t z) const {
  const auto cu = static_cast<std::size_t>(c);
  return logistic_bin(static_cast<double>(z) - loc_[cu], log_scale_[cu]).p;
}

double FactorizedPrior::table_bits(int c, std::int64_t z) const {
  const std::int64_t residual = z - center(c);
  const int idx = alphabet_.index_of(residual);
  const auto table = cdf(c);
  double bits = -std::log2((table[static_cast<std::size_t>(idx) + 1] -
                            table[static_cast<std::size_t>(idx)]) /
                           std::ldexp(1.0, precision_));
  if (idx == alphabet_.escape_index()) {
    const auto magnitude = static_cast<std::uint64_t>(std::llabs(residual)) -
                           static_cast<std::uint64_t>(alphabet_.half_width()) - 1;
    bits += 1.0 + exp_golomb_length(magnitude);
  }
  return bits;
}

}  // namespace crossctx
