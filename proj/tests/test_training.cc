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
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "crossctx/analysis.h"
#include "crossctx/training.h"
#include "doctest.h"
#include "oracles.h"

using namespace crossctx;

namespace {

SyntheticLatentSpec small_spec(int channels, std::uint64_t seed) {
  SyntheticLatentSpec s;
  s.channels = channels;
  s.height = 8;
  s.width = 8;
  s.seed = seed;
  return s.resolve();
}

TrainConfig small_latent_config(int channels, int groups, std::uint64_t seed) {
  TrainConfig c;
  c.model.context.channels = channels;
  c.model.context.groups = groups;
  c.synthetic = small_spec(channels, 3);
  c.batch = 2;
  c.steps = 10;
  c.lr = 3e-3;
  c.lr_decayed = 1e-3;
  c.decay_step = 7;
  c.seed = seed;
  return c;
}

TrainConfig small_image_config(std::uint64_t seed) {
  TrainConfig c;
  c.model.context.channels = 8;
  c.model.context.groups = 2;
  c.model.image_channels = 1;
  c.image_size = 16;
  c.batch = 1;
  c.steps = 6;
  c.lr = 1e-3;
  c.seed = seed;
  return c;
}

std::vector<std::uint8_t> state_bytes(const TrainResult& r) {
  return serialize_checkpoint(training_checkpoint(*r.model, r.adam));
}

std::vector<double> values_of(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

double plane_mad(const Tensor& t, int a, int b) {
  const auto pa = t.channel(a);
  const auto pb = t.channel(b);
  double s = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) s += std::abs(pa[i] - pb[i]);
  return s / static_cast<double>(pa.size());
}

double logistic_cdf(double v, double log_scale) {
  return 1.0 / (1.0 + std::exp(-v / std::exp(log_scale)));
}

}  // namespace

TEST_CASE("synthetic match maps") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SyntheticLatentSpec s = small_spec(32, seed);
    CHECK(s.max_distance == 8);
    std::set<int> sources;
    bool far = false;
    for (const MatchEntry& m : s.matches) {
      CHECK(m.target - m.source >= 2);
      CHECK(m.target - m.source <= 8);
      CHECK(sources.insert(m.source).second);
      far = far || m.target - m.source > 1;
    }
    CHECK(!s.matches.empty());
    CHECK(far);
  }
  SyntheticLatentSpec bad = small_spec(8, 1);
  bad.matches = {{3, 5}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.matches = {{5, 2}, {5, 1}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.matches = {{5, 4}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.matches.clear();
  bad.noise = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  SyntheticLatentSpec tiny;
  tiny.channels = 1;
  CHECK_THROWS_AS(tiny.resolve(), std::invalid_argument);
}

TEST_CASE("synthetic latents") {
  SyntheticLatentSpec s = small_spec(24, 5);
  const Tensor a = generate_synthetic_latents(s, 9);
  CHECK(values_of(a) == values_of(generate_synthetic_latents(s, 9)));
  CHECK(values_of(a) != values_of(generate_synthetic_latents(s, 10)));

  // Base channels carry the configured amplitude (blur undone).
  const std::vector<int> src = s.sources();
  double sq = 0.0;
  std::size_t n = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const Tensor t = generate_synthetic_latents(s, static_cast<std::uint64_t>(seed));
    for (int c = 0; c < 24; ++c) {
      if (src[static_cast<std::size_t>(c)] >= 0) continue;
      for (double v : t.channel(c)) sq += v * v, ++n;
    }
  }
  // Box blur of radius 1 in 2-D averages 9 samples: std 4 * 3 / 3 = 4.
  CHECK(std::sqrt(sq / static_cast<double>(n)) == doctest::Approx(4.0).epsilon(0.1));

  // The source is the closest earlier channel in MAD.
  for (const MatchEntry& m : s.matches) {
    const double own = plane_mad(a, m.target, m.source);
    for (int c = 0; c < m.target; ++c) {
      if (c != m.source) CHECK(own < plane_mad(a, m.target, c));
    }
  }

  s.noise = 0.0;
  const Tensor exact = generate_synthetic_latents(s, 4);
  for (const MatchEntry& m : s.matches) CHECK(plane_mad(exact, m.target, m.source) == 0.0);
}

TEST_CASE("rate terms of the loss match an independent computation") {
  for (ContextKind kind : {ContextKind::kSpatial2d, ContextKind::kMask3d, ContextKind::kGrouped}) {
    TrainConfig cfg = small_latent_config(8, 2, 4);
    cfg.model.context.kind = kind;
    const CompressionModel model(cfg.model.resolve());
    const Tensor y = generate_synthetic_latents(cfg.synthetic, 1);

    Tape t1(false);
    Rng rng(77);
    const LossVars lv = rd_loss(t1, model, y, rng);

    // Same noise draws: latents first, then hyper latents.
    Rng replay(77);
    Tensor y_tilde = y;
    for (double& v : y_tilde.values()) v += replay.uniform(-0.5, 0.5);
    Tape t2(false);
    Tensor z = model.hyper_analysis(t2, t2.constant(y)).value();
    for (double& v : z.values()) v += replay.uniform(-0.5, 0.5);
    const Tensor psi = model.hyper_synthesis(t2, t2.constant(z), 8, 8).value();
    const GaussianField f = model.context().estimate(y_tilde, psi);
    double ry = 0.0;
    for (std::size_t i = 0; i < y_tilde.size(); ++i) {
      // Upper-tail form so far-off bins do not cancel to zero.
      const double v = std::abs(y_tilde[i] - f.mu[i]);
      const double s = f.sigma[i] * std::sqrt(2.0);
      const double p = 0.5 * (std::erfc((v - 0.5) / s) - std::erfc((v + 0.5) / s));
      ry -= std::log2(std::max(p, ad::kLikelihoodFloor));
    }
    const FactorizedPrior prior = model.prior();
    const Parameter* loc = model.params().find("prior.loc");
    const Parameter* ls = model.params().find("prior.log_scale");
    double rz = 0.0;
    const std::size_t plane = static_cast<std::size_t>(z.height()) * z.width();
    for (std::size_t i = 0; i < z.size(); ++i) {
      const std::size_t c = i / plane;
      const double v = z[i] - loc->value[c];
      rz -= std::log2(logistic_cdf(v + 0.5, ls->value[c]) - logistic_cdf(v - 0.5, ls->value[c]));
    }
    const double pixels = 16.0 * 64.0;
    CHECK(lv.parts.rate_latent == doctest::Approx(ry / pixels).epsilon(1e-9));
    CHECK(lv.parts.rate_hyper == doctest::Approx(rz / pixels).epsilon(1e-9));
    CHECK(lv.parts.mse == 0.0);
    CHECK(lv.parts.total == doctest::Approx(lv.parts.rate_latent + lv.parts.rate_hyper));
  }
}

TEST_CASE("loss gradients agree with finite differences on sampled elements") {
  TrainConfig cfg = small_image_config(3);
  CompressionModel model(cfg.model.resolve());
  const Tensor x = generate_synthetic_image(1, 16, 16, 12);
  auto loss = [&] {
    Tape tape(false);
    Rng rng(5);
    return rd_loss(tape, model, x, rng).parts.total;
  };
  model.params().zero_grad();
  {
    Tape tape;
    Rng rng(5);
    tape.backward(rd_loss(tape, model, x, rng).total);
  }
  Rng pick(8);
  int checked = 0;
  double worst = 0.0;
  for (Parameter* p : model.params().all()) {
    for (int k = 0; k < 12; ++k) {
      const auto i = static_cast<std::size_t>(
          pick.uniform_int(0, static_cast<int>(p->value.size()) - 1));
      double best = 1e300;
      for (double h : {1e-5, 1e-6, 1e-4, 1e-3}) {
        const double num = oracle::central_difference(loss, &p->value[i], h);
        best = std::min(best, oracle::relative_error(p->grad[i], num, 1e-6));
      }
      worst = std::max(worst, best);
      ++checked;
    }
  }
  CHECK(checked > 100);
  CHECK(worst < 1e-4);
}

TEST_CASE("lambda zero leaves only the rate") {
  TrainConfig cfg = small_image_config(2);
  cfg.model.lambda = 0.0;
  CompressionModel model(cfg.model.resolve());
  const Tensor x = generate_synthetic_image(1, 16, 16, 1);
  model.params().zero_grad();
  Tape tape;
  Rng rng(3);
  const LossVars lv = rd_loss(tape, model, x, rng);
  tape.backward(lv.total);
  CHECK(lv.parts.mse > 0.0);
  CHECK(lv.parts.total == lv.parts.rate_latent + lv.parts.rate_hyper);
  for (const char* name : {"gs.conv1.w", "gs.conv2.w", "gs.conv2.b"}) {
    const Parameter* p = model.params().find(name);
    REQUIRE(p != nullptr);
    for (double g : p->grad.values()) CHECK(g == 0.0);
  }
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  c.steps = 30;
  c.lr = 1e-4;
  c.lr_decayed = 5e-5;
  CHECK(learning_rate(c, 0) == 1e-4);
  CHECK(learning_rate(c, 19) == 1e-4);
  CHECK(learning_rate(c, 20) == 5e-5);
  c.decay_step = 5;
  CHECK(learning_rate(c, 4) == 1e-4);
  CHECK(learning_rate(c, 5) == 5e-5);
}

TEST_CASE("training is deterministic and resumable") {
  const TrainConfig cfg = small_latent_config(8, 2, 6);
  const TrainResult full = train(cfg);
  CHECK(full.history.size() == 10);
  CHECK(state_bytes(train(cfg)) == state_bytes(full));

  TrainConfig half = cfg;
  half.steps = 4;
  const TrainResult first = train(half);
  const Checkpoint saved = parse_checkpoint(state_bytes(first));
  const TrainResult resumed = train(cfg, &saved);
  CHECK(resumed.history.size() == 6);
  CHECK(state_bytes(resumed) == state_bytes(full));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(resumed.history[i].total == full.history[i + 4].total);
  }

  TrainConfig other = cfg;
  other.seed = 7;
  CHECK(state_bytes(train(other)) != state_bytes(full));
}

TEST_CASE("zero steps returns the initialization") {
  TrainConfig cfg = small_latent_config(8, 2, 9);
  cfg.steps = 0;
  const TrainResult r = train(cfg);
  ModelConfig m = cfg.model;
  m.seed = cfg.seed;
  const CompressionModel fresh(m.resolve());
  CHECK(serialize_checkpoint(r.model->weights_checkpoint()) ==
        serialize_checkpoint(fresh.weights_checkpoint()));
  CHECK(r.history.empty());
}

TEST_CASE("training writes metrics and checkpoints") {
  const auto dir = std::filesystem::temp_directory_path() / "crossctx_train_test";
  std::filesystem::remove_all(dir);
  TrainConfig cfg = small_latent_config(8, 2, 2);
  cfg.out_dir = dir;
  cfg.checkpoint_every = 5;
  const TrainResult r = train(cfg);
  CHECK(std::filesystem::exists(dir / "final.ckpt"));
  CHECK(std::filesystem::exists(dir / "latest.ckpt"));
  const auto model = load_model(load_checkpoint(dir / "final.ckpt"));
  CHECK(model->fingerprint() == r.model->fingerprint());
  std::ifstream csv(dir / "metrics.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "step,rate_latent,rate_hyper,mse,total");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 10);
  std::filesystem::remove_all(dir);
}

TEST_CASE("mismatched data and model channels are rejected") {
  TrainConfig cfg = small_latent_config(8, 2, 1);
  cfg.synthetic = small_spec(16, 1);
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  TrainConfig defaults;
  CHECK(defaults.synthetic.channels == defaults.model.context.channels);
}

TEST_CASE("config files") {
  TrainConfig c;
  const auto kv = config_to_key_values(c);
  TrainConfig back;
  apply_config(back, kv);
  CHECK(config_to_key_values(back) == kv);

  const auto parsed = parse_key_values("# comment\nchannels = 16\n\nkind=mask3d\nlambda=0.0067\n");
  CHECK(parsed.size() == 3);
  apply_config(back, parsed);
  CHECK(back.model.context.channels == 16);
  CHECK(back.synthetic.channels == 16);
  CHECK(back.model.context.kind == ContextKind::kMask3d);
  CHECK(back.model.lambda == 0.0067);
  CHECK(parse_key_values(format_key_values(kv)) == kv);
  CHECK_THROWS_AS(apply_config(back, {{"no_such_key", "1"}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_config(back, {{"channels", "many"}}), std::invalid_argument);
  CHECK_THROWS_AS(parse_key_values("just text\n"), std::invalid_argument);
}

TEST_CASE("lambda presets keep their listed order") {
  const std::vector<double> presets(std::begin(kLambdaPresets), std::end(kLambdaPresets));
  CHECK(presets == std::vector<double>{0.018, 0.0035, 0.0067, 0.0130, 0.0250, 0.0483});
  const std::vector<int> channels(std::begin(kChannelPresets), std::end(kChannelPresets));
  CHECK(channels == std::vector<int>{128, 128, 128, 192, 192, 192});
}

TEST_CASE("rate-distortion evaluation") {
  TrainConfig cfg = small_latent_config(8, 2, 4);
  const TrainResult r = train(cfg);
  const auto data = synthetic_dataset(cfg.synthetic, 3, 50);
  const RDPoint p = eval_rd(*r.model, data);
  double bytes = 0.0;
  for (const Tensor& t : data) bytes += static_cast<double>(r.model->compress(quantize_round(t)).size());
  CHECK(p.bpp == doctest::Approx(8.0 * bytes / 3.0 / pixels_for_latents(8, 8)).epsilon(1e-12));
  CHECK(p.psnr_capped);
  CHECK(p.psnr == kPsnrCap);

  const TrainResult img = train(small_image_config(4));
  const RDPoint q = eval_rd(*img.model, image_dataset(1, 16, 2, 3));
  CHECK(q.mse > 0.0);
  CHECK(q.psnr == doctest::Approx(10.0 * std::log10(1.0 / q.mse)));
  CHECK_THROWS(eval_rd(*img.model, std::vector<Tensor>{}));
}

TEST_CASE("psnr") {
  bool capped = false;
  CHECK(psnr_from_mse(0.01, &capped) == doctest::Approx(20.0));
  CHECK(!capped);
  CHECK(psnr_from_mse(0.0, &capped) == kPsnrCap);
  CHECK(capped);
  CHECK(psnr_from_mse(1e-30, &capped) == kPsnrCap);
}

TEST_CASE("loss decreases during a short run") {
  // Default settings on a small latent grid. The 192-channel default costs
  // hours per seed at this step count.
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TrainConfig cfg;
    cfg.model.context.channels = 16;
    cfg.model.context.groups = 4;
    cfg.synthetic = small_spec(16, seed);
    cfg.steps = 2000;
    cfg.seed = seed;
    const TrainResult r = train(cfg);
    auto window = [&](std::size_t begin) {
      double s = 0.0;
      for (std::size_t i = begin; i < begin + 100; ++i) s += r.history[i].total;
      return s / 100.0;
    };
    CHECK(window(1900) < window(0));
    const RDPoint p = eval_rd(*r.model, synthetic_dataset(cfg.synthetic, 4, 99));
    CHECK(std::abs(p.bpp - p.estimate_bpp) < 0.15 * p.bpp);
  }
}
