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
#include <functional>
#include <stdexcept>
#include <vector>

#include "crossctx/autodiff.h"
#include "crossctx/binary_io.h"
#include "crossctx/checkpoint.h"
#include "crossctx/conv.h"
#include "crossctx/layers.h"
#include "crossctx/optimizer.h"
#include "crossctx/rng.h"
#include "doctest.h"
#include "oracles.h"

using namespace crossctx;

namespace {

// Builds loss = sum(f(leaves) * R) for fixed random R, so every output
// element contributes with its own weight.
using Graph = std::function<Var(Tape&, std::vector<Var>&)>;

double weighted_loss(const Graph& g, std::vector<Tensor>& leaves, const Tensor* weights,
                     Tape& tape, std::vector<Var>& vars) {
  vars.clear();
  for (Tensor& t : leaves) vars.push_back(tape.input(t));
  Var out = g(tape, vars);
  Var r = tape.constant(*weights);
  Var loss = ad::sum(ad::mul(out, r));
  return loss.value()[0];
}

// Checks every leaf element's gradient against central differences.
void check_graph(const Graph& g, std::vector<Tensor> leaves, std::vector<int> out_dims,
                 double h = 1e-5, double tol = 1e-6) {
  const Tensor weights = oracle::random_tensor(out_dims, 77);
  Tape tape;
  std::vector<Var> vars;
  for (Tensor& t : leaves) vars.push_back(tape.input(t));
  Var out = g(tape, vars);
  REQUIRE(out.value().dims() == weights.dims());
  Var loss = ad::sum(ad::mul(out, tape.constant(weights)));
  tape.backward(loss);
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const Tensor grad = tape.grad(vars[l]);
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      auto f = [&] {
        Tape t2(false);
        std::vector<Var> v2;
        return weighted_loss(g, leaves, &weights, t2, v2);
      };
      const double numeric = oracle::central_difference(f, &leaves[l][i], h);
      INFO("leaf " << l << " element " << i << " analytic " << grad[i] << " numeric " << numeric);
      CHECK(oracle::relative_error(grad[i], numeric, 1e-6) < tol);
    }
  }
}

}  // namespace

TEST_CASE("conv2d_forward matches the direct oracle for every mask") {
  const MaskKind masks[] = {MaskKind::kNone, MaskKind::kCausalA, MaskKind::kCausalB,
                            MaskKind::kCausal3d};
  std::uint64_t seed = 1;
  for (MaskKind mask : masks) {
    for (int k : {3, 5}) {
      for (int stride : {1, 2}) {
        ConvSpec s{4, 3, k, k, stride, k / 2, k / 2, mask};
        const Tensor x = oracle::random_tensor({4, 7, 6}, seed++);
        const Tensor w = oracle::random_tensor(s.weight_dims(), seed++);
        const Tensor b = oracle::random_tensor({3}, seed++);
        const Tensor got = conv2d_forward(x, w, b, s);
        const Tensor want = oracle::conv2d(x, w, b, s);
        REQUIRE(got.dims() == want.dims());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
      }
    }
  }
}

TEST_CASE("single-position conv is bit-identical to the full map") {
  ConvSpec s = ConvSpec::same(3, 4, 5, MaskKind::kCausalA);
  const Tensor x = oracle::random_tensor({3, 6, 5}, 11);
  const Tensor w = oracle::random_tensor(s.weight_dims(), 12);
  const Tensor b = oracle::random_tensor({4}, 13);
  const Tensor full = conv2d_forward(x, w, b, s);
  const TapMask taps(s);
  std::vector<double> out(4);
  for (int y = 0; y < 6; ++y) {
    for (int xx = 0; xx < 5; ++xx) {
      conv2d_at([&](int i, int iy, int ix) { return x.at(i, iy, ix); }, 6, 5, w, b, s, taps, y,
                xx, out);
      for (int o = 0; o < 4; ++o) CHECK(out[static_cast<std::size_t>(o)] == full.at(o, y, xx));
    }
  }
}

TEST_CASE("masked taps are zeroed and ignored") {
  ConvSpec s = ConvSpec::same(2, 1, 3, MaskKind::kCausalA);
  Tensor w = oracle::random_tensor(s.weight_dims(), 3);
  const Tensor masked = apply_mask(w, MaskKind::kCausalA);
  for (int i = 0; i < 2; ++i) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double v = masked[(static_cast<std::size_t>(i) * 3 + ky) * 3 + kx];
        if (!oracle::tap_used(MaskKind::kCausalA, 2, i, 3, 3, ky, kx)) CHECK(v == 0.0);
      }
    }
  }
  // Garbage in masked slots changes nothing.
  const Tensor x = oracle::random_tensor({2, 4, 4}, 4);
  const Tensor b({1});
  Tensor dirty = masked;
  dirty[4] = 1e6;  // centre tap of channel 0
  CHECK(conv2d_forward(x, masked, b, s) == conv2d_forward(x, dirty, b, s));
}

TEST_CASE("conv2d gradients match finite differences") {
  for (MaskKind mask : {MaskKind::kNone, MaskKind::kCausalA, MaskKind::kCausal3d}) {
    ConvSpec s{2, 3, 3, 3, 1, 1, 1, mask};
    check_graph([&](Tape&, std::vector<Var>& v) { return ad::conv2d(v[0], v[1], v[2], s); },
                {oracle::random_tensor({2, 4, 5}, 1), oracle::random_tensor(s.weight_dims(), 2),
                 oracle::random_tensor({3}, 3)},
                {3, 4, 5});
  }
  ConvSpec strided{2, 2, 5, 5, 2, 2, 2, MaskKind::kNone};
  check_graph([&](Tape&, std::vector<Var>& v) { return ad::conv2d(v[0], v[1], v[2], strided); },
              {oracle::random_tensor({2, 7, 6}, 4),
               oracle::random_tensor(strided.weight_dims(), 5), oracle::random_tensor({2}, 6)},
              {2, 4, 3});
}

TEST_CASE("elementwise op gradients match finite differences") {
  const Tensor a = oracle::random_tensor({2, 3, 3}, 21, 2.0);
  const Tensor b = oracle::random_tensor({2, 3, 3}, 22, 2.0);
  check_graph([](Tape&, std::vector<Var>& v) { return ad::leaky_relu(v[0], 0.1); }, {a},
              {2, 3, 3});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::softplus(v[0]); }, {a}, {2, 3, 3});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::mul(v[0], v[1]); }, {a, b}, {2, 3, 3});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::add(v[0], v[1]); }, {a, b}, {2, 3, 3});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::scale(v[0], -3.5); }, {a}, {2, 3, 3});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::clamp(v[0], -0.5, 0.7); }, {a},
              {2, 3, 3});
}

TEST_CASE("structural op gradients match finite differences") {
  const Tensor a = oracle::random_tensor({2, 3, 4}, 31);
  const Tensor b = oracle::random_tensor({3, 3, 4}, 32);
  check_graph(
      [](Tape&, std::vector<Var>& v) {
        std::vector<Var> parts{v[0], v[1]};
        return ad::concat_channels(parts);
      },
      {a, b}, {5, 3, 4});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::slice_channels(v[0], 1, 3); }, {b},
              {2, 3, 4});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::upsample_nearest(v[0], 5, 7); }, {a},
              {2, 5, 7});
  check_graph([](Tape&, std::vector<Var>& v) { return ad::mse(v[0], v[1]); },
              {a, oracle::random_tensor({2, 3, 4}, 33)}, {1});
}

TEST_CASE("rate terms match their closed forms and finite differences") {
  Tensor y({1, 2, 3}, std::vector<double>{0.2, -1.3, 2.6, 0.0, 4.1, -0.4});
  Tensor mu({1, 2, 3}, std::vector<double>{0.1, -1.0, 1.5, 0.3, 3.0, 0.2});
  Tensor sigma({1, 2, 3}, std::vector<double>{0.5, 1.2, 2.0, 0.8, 3.3, 0.3});
  double want = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = oracle::std_normal_cdf((y[i] + 0.5 - mu[i]) / sigma[i]) -
                     oracle::std_normal_cdf((y[i] - 0.5 - mu[i]) / sigma[i]);
    want -= std::log2(p);
  }
  Tape tape;
  CHECK(ad::gaussian_rate_bits(tape.constant(y), tape.constant(mu), tape.constant(sigma))
            .value()[0] == doctest::Approx(want).epsilon(1e-12));
  check_graph([](Tape&, std::vector<Var>& v) { return ad::gaussian_rate_bits(v[0], v[1], v[2]); },
              {y, mu, sigma}, {1});

  Tensor z({2, 1, 3}, std::vector<double>{0.3, -2.0, 1.1, 0.0, 0.6, -0.7});
  Tensor loc({2}, std::vector<double>{0.2, -0.1});
  Tensor log_scale({2}, std::vector<double>{-0.3, 0.4});
  double want_z = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double s = std::exp(log_scale[static_cast<std::size_t>(c)]);
    for (int x = 0; x < 3; ++x) {
      const double v = z.at(c, 0, x) - loc[static_cast<std::size_t>(c)];
      const double p = 1.0 / (1.0 + std::exp(-(v + 0.5) / s)) - 1.0 / (1.0 + std::exp(-(v - 0.5) / s));
      want_z -= std::log2(p);
    }
  }
  Tape tape2;
  CHECK(ad::logistic_rate_bits(tape2.constant(z), tape2.constant(loc), tape2.constant(log_scale))
            .value()[0] == doctest::Approx(want_z).epsilon(1e-12));
  check_graph([](Tape&, std::vector<Var>& v) { return ad::logistic_rate_bits(v[0], v[1], v[2]); },
              {z, loc, log_scale}, {1});
}

TEST_CASE("a tape backpropagates once and parameters accumulate across tapes") {
  ParameterSet params;
  Parameter& p = params.add("p", Tensor({2}, std::vector<double>{1.0, 2.0}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    Var loss = ad::sum(ad::mul(tape.parameter(p), tape.parameter(p)));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  }
  CHECK(p.grad[0] == 4.0);  // 2 tapes x d(p^2)/dp = 2p
  CHECK(p.grad[1] == 8.0);
  params.zero_grad();
  CHECK(p.grad[1] == 0.0);
}

TEST_CASE("Adam follows the bias-corrected update") {
  ParameterSet params;
  Parameter& p = params.add("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
  AdamState state;
  state.lr = 0.1;
  const double grads[3][2] = {{0.5, -1.0}, {0.25, 2.0}, {-0.75, 0.0}};
  double theta[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    params.zero_grad();
    for (int i = 0; i < 2; ++i) {
      p.grad[static_cast<std::size_t>(i)] = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * grads[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      theta[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam_step(params, state);
    CHECK(state.step == t);
    for (int i = 0; i < 2; ++i) {
      CHECK(p.value[static_cast<std::size_t>(i)] == doctest::Approx(theta[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("masked conv taps never move during training") {
  ParameterSet params;
  Rng rng(5);
  Conv2dLayer layer(params, "m", ConvSpec::same(3, 2, 5, MaskKind::kCausal3d), rng);
  AdamState adam;
  adam.lr = 0.05;
  for (int step = 0; step < 3; ++step) {
    params.zero_grad();
    Tape tape;
    Var out = layer(tape, tape.constant(oracle::random_tensor({3, 5, 5}, 100 + step)));
    tape.backward(ad::sum(ad::mul(out, out)));
    adam_step(params, adam);
  }
  const Tensor& w = layer.weight();
  for (int o = 0; o < 2; ++o) {
    for (int i = 0; i < 3; ++i) {
      for (int ky = 0; ky < 5; ++ky) {
        for (int kx = 0; kx < 5; ++kx) {
          if (oracle::tap_used(MaskKind::kCausal3d, 3, i, 5, 5, ky, kx)) continue;
          CHECK(w[((static_cast<std::size_t>(o) * 3 + i) * 5 + ky) * 5 + kx] == 0.0);
        }
      }
    }
  }
}

TEST_CASE("residual block equals its functional form") {
  ParameterSet params;
  Rng rng(9);
  ResidualBlock block(params, "r", 3, rng);
  const Tensor x = oracle::random_tensor({3, 4, 4}, 10);
  ResidualWeights rw{block.conv1().weight(), block.conv1().bias(), block.conv2().weight(),
                     block.conv2().bias()};
  const Tensor a = block.forward(x);
  const Tensor b = residual_block_forward(x, rw);
  // Independent composition with the oracle conv.
  Tensor h = oracle::conv2d(x, rw.w1, rw.b1, ConvSpec::same(3, 3, 3));
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = h[i] > 0 ? h[i] : kLeakySlope * h[i];
  const Tensor h2 = oracle::conv2d(h, rw.w2, rw.b2, ConvSpec::same(3, 3, 3));
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(a[i] == b[i]);
    CHECK(std::abs(a[i] - (x[i] + h2[i])) < 1e-12);
  }
}

TEST_CASE("tensor shape errors and non-finite checks") {
  Tape tape;
  Var a = tape.constant(Tensor({1, 2, 2}));
  Var b = tape.constant(Tensor({1, 2, 3}));
  CHECK_THROWS_AS(ad::add(a, b), ShapeError);
  Tensor bad({2}, std::vector<double>{1.0, std::nan("")});
  CHECK_THROWS_AS(ensure_finite(bad, "test"), NonFiniteError);
}

TEST_CASE("derived random streams are reproducible and distinct") {
  Rng a = Rng::derive(42, 3, 1);
  Rng b = Rng::derive(42, 3, 1);
  Rng c = Rng::derive(42, 3, 2);
  bool differ = false;
  for (int i = 0; i < 16; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    differ |= va != c.next_u64();
  }
  CHECK(differ);
  Rng n(7);
  double sum = 0.0, sq = 0.0;
  constexpr int kDraws = 200000;
  for (int i = 0; i < kDraws; ++i) {
    const double v = n.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / kDraws) < 0.01);
  CHECK(std::abs(sq / kDraws - 1.0) < 0.01);
}

TEST_CASE("checkpoints round-trip and reject corruption") {
  ParameterSet params;
  params.add("a", oracle::random_tensor({2, 3}, 1));
  params.add("b", oracle::random_tensor({4}, 2));
  Checkpoint ck = capture_parameters(params, {{"k", "v"}});
  const auto bytes = serialize_checkpoint(ck);
  const Checkpoint back = parse_checkpoint(bytes);
  CHECK(back.meta_value("k") == "v");
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].second == params.find("a")->value);
  CHECK(serialize_checkpoint(back) == bytes);

  auto corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(parse_checkpoint(corrupt), FormatError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(parse_checkpoint(cut), FormatError);

  ParameterSet other;
  other.add("a", Tensor({2, 3}));
  other.add("b", Tensor({5}));
  CHECK_THROWS_AS(restore_parameters(other, back), FormatError);
}
