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

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "crossctx/entropy_models.h"
#include "crossctx/rng.h"
#include "doctest.h"
#include "oracles.h"

using namespace crossctx;

namespace {

double gauss_mass(double s, double mu, double sigma) {
  return oracle::std_normal_cdf((s + 0.5 - mu) / sigma) -
         oracle::std_normal_cdf((s - 0.5 - mu) / sigma);
}

// sigma with 2 Phi(0.5 / sigma) - 1 = p, by bisection on the oracle CDF.
double sigma_for_center_mass(double p) {
  double lo = 1e-3, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    (gauss_mass(0.0, 0.0, mid) > p ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

void check_cdf(std::span<const std::uint32_t> cdf, int precision) {
  REQUIRE(cdf.size() >= 3);
  CHECK(cdf.front() == 0u);
  CHECK(cdf.back() == (1u << precision));
  for (std::size_t i = 1; i < cdf.size(); ++i) CHECK(cdf[i] > cdf[i - 1]);
}

}  // namespace

TEST_CASE("discretized Gaussian mass") {
  CHECK(discretized_gaussian_prob(0, 0.0, 1.0) == doctest::Approx(0.382925).epsilon(1e-6));
  CHECK(discretized_gaussian_prob(0, 0.0, 1.0) ==
        doctest::Approx(2.0 * oracle::std_normal_cdf(0.5) - 1.0).epsilon(1e-14));
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const std::int64_t s = rng.uniform_int(-20, 20);
    const double mu = rng.uniform(-20.0, 20.0);
    const double sigma = rng.uniform(0.2, 30.0);
    CHECK(discretized_gaussian_prob(s, mu, sigma) ==
          doctest::Approx(gauss_mass(static_cast<double>(s), mu, sigma)).epsilon(1e-9));
    CHECK(discretized_gaussian_prob(s, mu, sigma) == discretized_gaussian_prob(-s, -mu, sigma));
  }
  // Mass at the mean grows as sigma shrinks toward the clamp.
  double prev = 0.0;
  for (double sigma = 5.0; sigma >= kSigmaMin; sigma *= 0.8) {
    const double p = discretized_gaussian_prob(3, 3.0, sigma);
    CHECK(p > prev);
    prev = p;
  }
  CHECK(prev > 0.99);
}

TEST_CASE("sigma below the clamp is raised and counted") {
  ClampStats stats;
  const double p = discretized_gaussian_prob(0, 0.0, 0.01, &stats);
  CHECK(stats.clamped == 1);
  CHECK(p == discretized_gaussian_prob(0, 0.0, kSigmaMin));
  discretized_gaussian_prob(0, 0.0, 0.5, &stats);
  CHECK(stats.clamped == 1);
}

TEST_CASE("quantize_cdf") {
  const std::vector<double> two{0.5, 0.5};
  CHECK(quantize_cdf(two, 16) == std::vector<std::uint32_t>{0, 32768, 65536});

  const std::vector<double> skew{0.999999, 0.0000005, 0.0000005, 0.0};
  const auto c = quantize_cdf(skew, 16);
  check_cdf(c, 16);

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(2, 40);
    std::vector<double> p(static_cast<std::size_t>(n));
    double total = 0.0;
    for (double& v : p) total += v = rng.uniform();
    for (double& v : p) v /= total;
    const auto cdf = quantize_cdf(p, 16);
    check_cdf(cdf, 16);
    for (int i = 0; i < n; ++i) {
      const double q = (cdf[static_cast<std::size_t>(i) + 1] - cdf[static_cast<std::size_t>(i)]) /
                       65536.0;
      CHECK(std::abs(q - p[static_cast<std::size_t>(i)]) < std::ldexp(1.0, 1 - 16) * n);
    }
    CHECK(quantize_cdf(p, 16) == cdf);
  }

  const std::vector<double> many(9, 1.0 / 9);
  CHECK_THROWS_AS(quantize_cdf(many, 3), std::invalid_argument);
  const std::vector<double> neg{0.5, -0.1, 0.6};
  CHECK_THROWS_AS(quantize_cdf(neg, 16), std::invalid_argument);
}

TEST_CASE("largest remainder rounding") {
  // spare = 16 - 3 = 13 counts; shares 13 * {0.5, 0.3, 0.2} = 6.5, 3.9, 2.6
  // floors 6, 3, 2 (11), two leftovers go to remainders .9 then .6.
  const std::vector<double> p{0.5, 0.3, 0.2};
  CHECK(quantize_cdf(p, 4) == std::vector<std::uint32_t>{0, 7, 12, 16});
}

TEST_CASE("scale table layout and lookup") {
  const ScaleTable table(ScaleTableConfig{});
  REQUIRE(table.size() == 64);
  CHECK(table.sigma(0) == kSigmaMin);
  CHECK(table.sigma(63) == kSigmaMax);
  const double ratio = std::pow(kSigmaMax / kSigmaMin, 1.0 / 63.0);
  for (int i = 1; i < table.size(); ++i) {
    CHECK(table.sigma(i) > table.sigma(i - 1));
    CHECK(table.sigma(i) / table.sigma(i - 1) == doctest::Approx(ratio).epsilon(1e-9));
    check_cdf(table.cdf(i), 16);
  }
  CHECK(sigma_to_table_index(0.01, table) == 0);
  CHECK(sigma_to_table_index(1e6, table) == 63);
  for (int i = 0; i < table.size(); ++i) CHECK(sigma_to_table_index(table.sigma(i), table) == i);
  CHECK(sigma_to_table_index(std::nextafter(table.sigma(10), 1e9), table) == 11);
  CHECK(table.alphabet().size() == 34);
  // Escape keeps nonzero mass even for the widest entry.
  const auto wide = table.cdf(63);
  CHECK(wide[33] < wide[34]);
}

TEST_CASE("scale table config validation") {
  ScaleTableConfig bad;
  bad.sigma_min = 0.0;
  CHECK_THROWS_AS(ScaleTable{bad}, std::invalid_argument);
  bad = {};
  bad.precision = 4;
  bad.alphabet_half = 16;
  CHECK_THROWS_AS(ScaleTable{bad}, std::invalid_argument);
}

TEST_CASE("alphabet mapping and Exp-Golomb lengths") {
  const SymbolAlphabet ab(3);
  CHECK(ab.index_of(-3) == 0);
  CHECK(ab.index_of(3) == 6);
  CHECK(ab.index_of(4) == ab.escape_index());
  CHECK(ab.index_of(-100) == ab.escape_index());
  for (int i = 0; i < 7; ++i) CHECK(ab.index_of(ab.residual_of(i)) == i);
  // floor(log2(v + 1)) zeros, then v + 1 in binary.
  for (std::uint64_t v : {0ull, 1ull, 2ull, 3ull, 6ull, 7ull, 100ull, 1ull << 40}) {
    const int bits = static_cast<int>(std::floor(std::log2(static_cast<double>(v) + 1.0)));
    CHECK(exp_golomb_length(v) == 2 * bits + 1);
  }
}

TEST_CASE("round_mean rounds half away from zero") {
  CHECK(round_mean(0.5) == 1);
  CHECK(round_mean(-0.5) == -1);
  CHECK(round_mean(1.49) == 1);
  CHECK(round_mean(-2.51) == -3);
  CHECK(round_mean(1e20) == (1ll << 30));
}

TEST_CASE("latent_rate_bits") {
  LatentTensor one(1, 1, 1);
  GaussianField f{Tensor({1, 1, 1}, 0.0), Tensor({1, 1, 1}, sigma_for_center_mass(0.5))};
  CHECK(latent_rate_bits(one, f) == doctest::Approx(1.0).epsilon(1e-9));
  f.sigma[0] = sigma_for_center_mass(1.0 / 256.0);
  CHECK(latent_rate_bits(one, f) == doctest::Approx(8.0).epsilon(1e-9));

  Rng rng(5);
  LatentTensor y(8, 4, 4);
  GaussianField g{Tensor({8, 4, 4}), Tensor({8, 4, 4})};
  double want = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    g.mu[i] = rng.uniform(-5.0, 5.0);
    g.sigma[i] = rng.uniform(0.3, 6.0);
    y[i] = static_cast<std::int32_t>(std::lround(g.mu[i] + 2.0 * g.sigma[i] * rng.normal()));
    want -= std::log2(gauss_mass(y[i], g.mu[i], g.sigma[i]));
  }
  CHECK(latent_rate_bits(y, g) == doctest::Approx(want).epsilon(1e-12));

  GaussianField wrong{Tensor({8, 4, 3}), Tensor({8, 4, 3}, 1.0)};
  CHECK_THROWS_AS(latent_rate_bits(y, wrong), ShapeError);
}

TEST_CASE("table rate is never better than the exact model on its own samples") {
  const ScaleTable table(ScaleTableConfig{});
  Rng rng(8);
  double exact = 0.0, tabled = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double mu = rng.uniform(-4.0, 4.0);
    const double sigma = std::exp(rng.uniform(std::log(0.2), std::log(8.0)));
    const auto s = static_cast<std::int64_t>(std::llround(mu + sigma * rng.normal()));
    exact -= std::log2(gauss_mass(static_cast<double>(s), mu, sigma));
    tabled += table_rate_bits(s, mu, sigma, table);
  }
  CHECK(tabled >= exact);
  CHECK(tabled < 1.05 * exact);
}

TEST_CASE("escape rate adds sign and Exp-Golomb bits") {
  const ScaleTable table(ScaleTableConfig{});
  const int idx = sigma_to_table_index(1.0, table);
  const auto cdf = table.cdf(idx);
  const double esc = -std::log2((cdf[34] - cdf[33]) / 65536.0);
  // residual 20 with L = 16: magnitude 20 - 17 = 3 -> 5 bits, plus sign.
  CHECK(table_rate_bits(20, 0.2, 1.0, table) == doctest::Approx(esc + 1.0 + 5.0));
  CHECK(table_rate_bits(-17, 0.0, 1.0, table) == doctest::Approx(esc + 1.0 + 1.0));
}

TEST_CASE("factorized prior") {
  Tensor loc({3}, std::vector<double>{0.0, 2.7, -1.2});
  Tensor log_scale({3}, std::vector<double>{0.0, -1.0, 1.5});
  const FactorizedPrior prior(loc, log_scale, 16, 16);
  CHECK(prior.center(1) == 3);
  CHECK(prior.center(2) == -1);
  for (int c = 0; c < 3; ++c) {
    check_cdf(prior.cdf(c), 16);
    const double s = std::exp(log_scale[static_cast<std::size_t>(c)]);
    double total = 0.0;
    for (int z = -200; z <= 200; ++z) {
      const double v = z - loc[static_cast<std::size_t>(c)];
      const double want =
          1.0 / (1.0 + std::exp(-(v + 0.5) / s)) - 1.0 / (1.0 + std::exp(-(v - 0.5) / s));
      CHECK(prior.prob(c, z) == doctest::Approx(want).epsilon(1e-9));
      total += prior.prob(c, z);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  Tensor bad({2});
  CHECK_THROWS_AS(FactorizedPrior(loc, bad, 16, 16), ShapeError);
}
