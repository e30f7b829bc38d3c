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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "oracles.h"
#include "crossctx/analysis.h"
#include "crossctx/codec.h"
#include "crossctx/context_pipeline.h"
#include "crossctx/model.h"
#include "crossctx/training.h"

using namespace crossctx;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

constexpr ContextKind kKinds[] = {ContextKind::kSpatial2d, ContextKind::kMask3d,
                                  ContextKind::kGrouped};

ModelConfig model_config(ContextKind kind, int n, int g, std::uint64_t seed) {
  ModelConfig m;
  m.context.kind = kind;
  m.context.channels = n;
  m.context.groups = g;
  m.seed = seed;
  return m.resolve();
}

LatentTensor random_latents(Rng& rng, int c, int h, int w) {
  const int range = rng.uniform_int(1, 12);
  LatentTensor y(c, h, w);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double u = rng.uniform();
    y[i] = u < 0.02 ? rng.uniform_int(-5000, 5000) : rng.uniform_int(-range, range);
  }
  return y;
}

// 1. decode(encode(x)) == x for random models and latents.
Outcome lossless_roundtrip() {
  const auto start = std::chrono::steady_clock::now();
  int failures = 0;
  int cases = 0;
  for (ContextKind kind : kKinds) {
    Rng rng(Rng::derive(101, static_cast<std::uint64_t>(kind)).next_u64());
    for (int i = 0; i < 100; ++i) {
      const int n = rng.uniform() < 0.5 ? 8 : 16;
      const int g = rng.uniform() < 0.5 ? 2 : 4;
      const CompressionModel model(model_config(kind, n, g, rng.next_u64()));
      const LatentTensor y =
          random_latents(rng, n, rng.uniform_int(1, 8), rng.uniform_int(1, 8));
      failures += model.decompress(model.compress(y)) == y ? 0 : 1;
      ++cases;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {failures == 0 && secs < 120.0,
          format("%d cases, %d mismatches, %.1f s (limit 120 s)", cases, failures, secs)};
}

// 2. Coded bits lie in [estimate, estimate + 32 + 8 * segments].
Outcome rate_bound() {
  Rng rng(202);
  int failures = 0;
  double lo = 1e300;
  double hi = -1e300;
  for (int i = 0; i < 50; ++i) {
    const ContextKind kind = kKinds[i % 3];
    const CompressionModel model(model_config(kind, 16, 4, rng.next_u64()));
    const LatentTensor y = random_latents(rng, 16, rng.uniform_int(4, 8), rng.uniform_int(4, 8));
    CodingTrace trace;
    double hyper_bits = 0.0;
    const Bitstream s = parse_bitstream(model.compress(y, &trace, &hyper_bits));
    const double actual =
        8.0 * static_cast<double>(s.latent_payload.size() + s.hyper_payload.size());
    const double estimate = trace.table_bits + hyper_bits;
    const double slack = 32.0 + 8.0 * model.context().num_passes();
    const double over = actual - estimate;
    lo = std::min(lo, over);
    hi = std::max(hi, over);
    if (over < 0.0 || over > slack) ++failures;
  }
  return {failures == 0,
          format("50 cases, %d outside the bound, excess bits in [%.2f, %.2f]", failures, lo, hi)};
}

// 3. Every parameter gradient of a miniature image pipeline.
Outcome gradient_check() {
  ModelConfig m = model_config(ContextKind::kGrouped, 8, 2, 3);
  m.image_channels = 1;
  CompressionModel model(m.resolve());
  // 32x32 pixels give an 8x8 latent grid.
  const Tensor image = generate_synthetic_image(1, 32, 32, 17);
  const GradientCheckResult r = check_gradients(model, image, 5);
  return {r.failed == 0 && r.checked == model.params().element_count(),
          format("%zu parameters, %zu above 1e-4, max rel err %.3g at %s", r.checked, r.failed,
                 r.max_rel_error, r.worst.c_str())};
}

// 4. Perturbation audit of every (p, q) pair.
Outcome causality_audit() {
  std::string detail;
  bool ok = true;
  for (ContextKind kind : kKinds) {
    ParameterSet params;
    Rng rng(404);
    ContextConfig cc;
    cc.kind = kind;
    cc.channels = 16;
    cc.groups = 4;
    const ContextModelBundle bundle(cc.resolve(), params, rng);
    const Tensor y = oracle::random_tensor({16, 6, 6}, 9, 3.0);
    const Tensor psi = oracle::random_tensor({32, 6, 6}, 10, 1.0);
    const DependencyMap map = dependency_map(bundle, y, psi);
    std::size_t violations = 0;
    std::size_t deps = 0;
    bool cross_future = false;  // earlier channel at a raster-later position
    bool other_channel = false;
    bool beyond_window = false;
    for (std::size_t i = 0; i < map.count(); ++i) {
      const Position p = map.position(i);
      for (const Position& q : map.dependencies(p)) {
        ++deps;
        if (!legal_dependency(bundle, p, q)) ++violations;
        const bool later = q.y > p.y || (q.y == p.y && q.x > p.x);
        cross_future |= q.c < p.c && later;
        other_channel |= q.c != p.c;
        beyond_window |= q.c < p.c - (cc.mask3d_window - 1);
      }
    }
    // The expected shape of each region, beyond mere legality.
    bool shape = false;
    switch (kind) {
      case ContextKind::kGrouped:
        shape = cross_future;
        break;
      case ContextKind::kSpatial2d:
        shape = other_channel && !cross_future;
        break;
      case ContextKind::kMask3d:
        shape = other_channel && !beyond_window;
        break;
    }
    ok = ok && violations == 0 && shape && deps > 0;
    detail += format("%s%s: %zu deps, %zu violations%s", detail.empty() ? "" : "; ",
                     std::string(context_kind_name(kind)).c_str(), deps, violations,
                     shape ? "" : ", unexpected region");
  }
  return {ok, detail};
}

// 5. Grouped layer widths against the reference width table (N = 128, 192).
Outcome layer_table() {
  int mismatches = 0;
  int checked = 0;
  for (int n : {128, 192}) {
    // Rows Ic, Is, c, m, Id, e1, e2, e3; columns 1-1, 1-2, 2 .. 8; 0 = "-".
    const int table[8][9] = {
        {0, 1, n / 8, n / 4, 3 * n / 8, n / 2, 5 * n / 8, 3 * n / 4, 7 * n / 8},
        {1, n / 8, n / 4, 3 * n / 8, n / 2, 5 * n / 8, 3 * n / 4, 7 * n / 8, n},
        {0, n / 4 - 2, n / 4, n / 4, n / 4, n / 4, n / 4, n / 4, n / 4},
        {2, n / 4 - 2, n / 4, n / 4, n / 4, n / 4, n / 4, n / 4, n / 4},
        {2 * n, 2 * n, 2 * n, 2 * n, 2 * n, 2 * n, 2 * n, 2 * n, 2 * n},
        {n + 1, 5 * n / 4 - 2, 5 * n / 4, 5 * n / 4, 5 * n / 4, 5 * n / 4, 5 * n / 4, 5 * n / 4,
         5 * n / 4},
        {n / 2, 5 * n / 8 - 1, 5 * n / 8, 5 * n / 8, 5 * n / 8, 5 * n / 8, 5 * n / 8, 5 * n / 8,
         5 * n / 8},
        {2, n / 4 - 2, n / 4, n / 4, n / 4, n / 4, n / 4, n / 4, n / 4},
    };
    ParameterSet params;
    Rng rng(5);
    ContextConfig cc;
    cc.channels = n;
    cc.groups = 8;
    const ContextModelBundle bundle(cc.resolve(), params, rng);
    for (int k = 0; k < 9; ++k) {
      const SegmentNets& s = bundle.segments().at(static_cast<std::size_t>(k));
      const int ic = s.cross_in ? s.cross_in->spec().in_ch : 0;
      const int c = s.cross_in ? s.cross_in->spec().out_ch : 0;
      const int id = s.ep1.spec().in_ch - c - s.spatial.spec().out_ch;
      const int built[8] = {ic,
                            s.spatial.spec().in_ch,
                            c,
                            s.spatial.spec().out_ch,
                            id,
                            s.ep1.spec().out_ch,
                            s.ep2.spec().out_ch,
                            s.ep3.spec().out_ch};
      for (int row = 0; row < 8; ++row) {
        ++checked;
        mismatches += built[row] == table[row][k] ? 0 : 1;
      }
      // The residual block keeps c channels; ep layers chain.
      mismatches += s.ep2.spec().in_ch == s.ep1.spec().out_ch ? 0 : 1;
      mismatches += s.ep3.spec().in_ch == s.ep2.spec().out_ch ? 0 : 1;
      if (s.cross_res) mismatches += s.cross_res->conv2().spec().out_ch == c ? 0 : 1;
    }
  }
  return {mismatches == 0, format("%d table entries over N = 128, 192, %d mismatches", checked,
                                  mismatches)};
}

// 6. Serial masked-conv invocations counted while decoding.
Outcome serial_schedule() {
  const int cs[] = {16, 24, 32};
  const int hw[][2] = {{4, 4}, {5, 7}, {8, 3}, {6, 6}};
  int shapes = 0;
  int mismatches = 0;
  for (int c : cs) {
    for (const auto& s : hw) {
      ++shapes;
      const int h = s[0];
      const int w = s[1];
      for (ContextKind kind : kKinds) {
        const CompressionModel model(model_config(kind, c, 8, 6));
        Rng rng(static_cast<std::uint64_t>(c * 100 + h * 10 + w));
        const LatentTensor y = random_latents(rng, c, h, w);
        CodingTrace trace;
        if (!(model.decompress(model.compress(y), &trace) == y)) ++mismatches;
        const std::uint64_t hw_count = static_cast<std::uint64_t>(h) * w;
        const std::uint64_t want = kind == ContextKind::kSpatial2d ? hw_count
                                   : kind == ContextKind::kMask3d  ? c * hw_count
                                                                   : 9 * hw_count;
        if (trace.serial_steps != want || serial_ops(kind, c, h, w, 8) != want) ++mismatches;
      }
    }
  }
  return {mismatches == 0 && shapes == 12,
          format("%d shapes x 3 kinds, %d mismatches (H*W, C*H*W, 9*H*W)", shapes, mismatches)};
}

// Shared training budget of the comparative experiments.
TrainConfig experiment_config(ContextKind kind, int n, int g, std::uint64_t seed) {
  TrainConfig tc;
  tc.model.context.kind = kind;
  tc.model.context.channels = n;
  tc.model.context.groups = g;
  tc.synthetic.channels = n;
  tc.synthetic.height = 16;
  tc.synthetic.width = 16;
  tc.synthetic.noise = 0.5;
  tc.synthetic.seed = seed;
  tc.seed = seed;
  tc.batch = 2;
  tc.steps = 1000;
  tc.crop = 8;
  tc.lr = 3e-3;
  tc.lr_decayed = 1.5e-3;
  return tc;
}

struct Trained {
  double bpp = 0.0;
  double estimate_bpp = 0.0;
  std::size_t context_params = 0;
};

Trained train_and_eval(const TrainConfig& tc) {
  const TrainResult r = train(tc);
  const RDPoint p = eval_rd(*r.model, synthetic_dataset(tc.synthetic, 4, 999));
  return {p.bpp, p.estimate_bpp, r.model->context().parameter_count()};
}

// 7. Grouped vs spatial2d vs mask3d at equal budget.
Outcome comparative_rate() {
  double mean[3] = {0.0, 0.0, 0.0};
  std::size_t params[3] = {0, 0, 0};
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (int k = 0; k < 3; ++k) {
      const Trained t = train_and_eval(experiment_config(kKinds[k], 64, 8, seed));
      mean[k] += t.bpp / 3.0;
      params[k] = t.context_params;
      std::fprintf(stderr, "  [7] seed %llu %s: %.4f bpp\n", static_cast<unsigned long long>(seed),
                   std::string(context_kind_name(kKinds[k])).c_str(), t.bpp);
    }
  }
  const double s2d = mean[0];
  const double m3d = mean[1];
  const double grp = mean[2];
  const double saving = 1.0 - grp / s2d;
  const double param_ratio = static_cast<double>(params[0]) / static_cast<double>(params[2]);
  const bool ok = saving >= 0.05 && std::abs(param_ratio - 1.0) <= 0.10 && m3d >= 0.99 * s2d;
  return {ok, format("mean bpp grouped %.4f, spatial2d %.4f, mask3d %.4f; grouped saves %.1f%% "
                     "(need >= 5%%); params spatial2d/grouped %.3f; mask3d vs spatial2d %+.1f%%",
                     grp, s2d, m3d, 100.0 * saving, param_ratio, 100.0 * (m3d / s2d - 1.0))};
}

// 8. Group-count sweep G = 4, 8, 12.
Outcome group_sweep() {
  const int groups[] = {4, 8, 12};
  double mean[3] = {0.0, 0.0, 0.0};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (int i = 0; i < 3; ++i) {
      const Trained t = train_and_eval(experiment_config(ContextKind::kGrouped, 48, groups[i], seed));
      mean[i] += t.bpp / 3.0;
      std::fprintf(stderr, "  [8] seed %llu G=%d: %.4f bpp\n", static_cast<unsigned long long>(seed),
                   groups[i], t.bpp);
    }
  }
  const double d84 = std::abs(mean[1] - mean[0]);
  const double d128 = std::abs(mean[2] - mean[1]);
  const bool ok = mean[1] <= mean[0] && d128 < 0.5 * d84;
  return {ok, format("mean bpp G4 %.4f, G8 %.4f, G12 %.4f; |G12-G8| %.4f vs 0.5*|G8-G4| %.4f",
                     mean[0], mean[1], mean[2], d128, 0.5 * d84)};
}

// 9. Planted-source recovery and non-adjacent matches on trained latents.
Outcome mad_analysis() {
  double worst_recovery = 1.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticLatentSpec s;
    s.channels = 64;
    s.seed = seed;
    s = s.resolve();
    std::vector<LatentTensor> batch;
    for (const Tensor& t : synthetic_dataset(s, 8, 999)) batch.push_back(quantize_round(t));
    worst_recovery = std::min(worst_recovery, planted_recovery(mad_match(batch), s.sources()));
  }
  double worst_nonadjacent = 1.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TrainConfig tc;
    tc.model.context.channels = 32;
    tc.model.context.groups = 4;
    tc.model.image_channels = 1;
    tc.image_size = 32;
    tc.crop = 16;
    tc.batch = 2;
    tc.steps = 300;
    tc.lr = 3e-3;
    tc.lr_decayed = 1.5e-3;
    tc.seed = seed;
    const TrainResult r = train(tc);
    std::vector<LatentTensor> latents;
    for (const Tensor& image : image_dataset(1, 32, 8, 999)) {
      latents.push_back(quantize_round(r.model->analysis(image)));
    }
    worst_nonadjacent = std::min(worst_nonadjacent, mad_match(latents).non_adjacent_fraction());
  }
  return {worst_recovery >= 0.95 && worst_nonadjacent > 0.5,
          format("planted recovery %.1f%% (need >= 95%%); trained latents non-adjacent %.1f%% "
                 "(need > 50%%), worst of 3 seeds each",
                 100.0 * worst_recovery, 100.0 * worst_nonadjacent)};
}

// 10. BD-rate tool.
Outcome bd_rate_tool() {
  Rng rng(1010);
  double identical = 0.0;
  double scaled_err = 0.0;
  double oracle_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    RDCurve a;
    RDCurve b;
    double bpp = 0.1 + 0.2 * rng.uniform();
    double q = 28.0 + rng.uniform();
    const int n = 4 + rng.uniform_int(0, 4);
    for (int i = 0; i < n; ++i) {
      a.points.push_back({bpp, q});
      b.points.push_back({bpp * (0.7 + 0.5 * rng.uniform()), q + rng.uniform() - 0.5});
      bpp *= 1.3 + rng.uniform();
      q += 1.0 + 2.0 * rng.uniform();
    }
    std::sort(b.points.begin(), b.points.end(),
              [](const auto& x, const auto& y) { return x.bpp < y.bpp; });
    try {
      b.validate();
    } catch (const std::invalid_argument&) {
      continue;
    }
    identical = std::max(identical, std::abs(bd_rate(a, a)));
    RDCurve cheaper = a;
    for (auto& p : cheaper.points) p.bpp *= 0.9;
    scaled_err = std::max(scaled_err, std::abs(bd_rate(a, cheaper) + 10.0));
    std::vector<std::pair<double, double>> pa, pb;
    for (const auto& p : a.points) pa.emplace_back(p.bpp, p.quality);
    for (const auto& p : b.points) pb.emplace_back(p.bpp, p.quality);
    double got = 0.0;
    try {
      got = bd_rate(a, b);
    } catch (const std::invalid_argument&) {
      continue;  // no quality overlap
    }
    const double want = oracle::bd_rate(pa, pb);
    oracle_err = std::max(oracle_err, std::abs(got - want) / std::max(std::abs(want), 1e-9));
  }
  const bool ok = identical < 5e-5 && scaled_err <= 0.1 && oracle_err <= 0.002;
  return {ok, format("identical %.4f%%; 10%% scaling off by %.2e points; max relative gap to the "
                     "dense-grid oracle %.2e (limit 2e-3)",
                     identical, scaled_err, oracle_err)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"lossless round-trip", lossless_roundtrip},
      {"rate-accounting bound", rate_bound},
      {"gradient correctness", gradient_check},
      {"causality audit", causality_audit},
      {"layer width table", layer_table},
      {"serial-schedule formulas", serial_schedule},
      {"comparative rate experiment", comparative_rate},
      {"group-count sweep", group_sweep},
      {"MAD analysis", mad_analysis},
      {"BD-rate tool", bd_rate_tool},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && selected.count(id) == 0) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %s: %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
