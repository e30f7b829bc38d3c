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

// crossctx command-line driver.
//
// Every subcommand resolves its configuration as defaults < --config file <
// flags, writes it to the output directory together with a version stamp,
// and only then starts working. The output directory is locked for the
// duration of the run.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <deque>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crossctx/analysis.h"
#include "crossctx/checkpoint.h"
#include "crossctx/codec.h"
#include "crossctx/model.h"
#include "crossctx/training.h"
#include "json.hpp"

#ifndef CROSSCTX_VERSION
#define CROSSCTX_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace crossctx;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exclusive ownership of an output directory.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".crossctx.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw std::runtime_error("output directory " + dir.string() +
                               " is locked by another run (remove " + path_.string() +
                               " if stale)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd, pid.data(), pid.size()) < 0) {
      ::close(fd);
      throw std::runtime_error("cannot write " + path_.string());
    }
    ::close(fd);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError("bad number '" + item + "' in " + what);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(what + " is empty");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Options shared by every subcommand: the config file and one flag per key.
struct ConfigOptions {
  std::string config_file;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    const auto defaults = config_to_key_values(TrainConfig{});
    for (const auto& [key, value] : defaults) {
      options[key] = app->add_option("--" + key, flags[key], "config key " + key)
                         ->default_str(value.empty() ? "\"\"" : value)
                         ->group("Config keys");
    }
  }

  // check_model = false leaves model validation to the caller (sweeps that
  // override the group count).
  TrainConfig resolve(const std::string& default_out, bool check_model = true) const {
    TrainConfig cfg;
    cfg.out_dir = default_out;
    try {
      if (!config_file.empty()) apply_config(cfg, parse_key_values(read_text(config_file)));
      std::map<std::string, std::string> given;
      for (const auto& [key, opt] : options) {
        if (opt->count() > 0) given[key] = flags.at(key);
      }
      apply_config(cfg, given);
      if (check_model) cfg.model = cfg.model.resolve();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (cfg.out_dir.empty()) throw UsageError("out_dir must not be empty");
    return cfg;
  }
};

// Records the run before any work starts.
void record_run(const TrainConfig& cfg, const std::string& subcommand,
                const std::vector<std::string>& argv, const json& extra) {
  std::string text = "# crossctx " CROSSCTX_VERSION " " + subcommand + "\n";
  text += format_key_values(config_to_key_values(cfg));
  write_text(cfg.out_dir / "config.txt", text);
  write_text(cfg.out_dir / "VERSION", CROSSCTX_VERSION "\n");
  json run;
  run["version"] = CROSSCTX_VERSION;
  run["subcommand"] = subcommand;
  run["argv"] = argv;
  run["config"] = config_to_key_values(cfg);
  run["arguments"] = extra;
  write_text(cfg.out_dir / "run.json", run.dump(2) + "\n");
}

std::unique_ptr<CompressionModel> load_model_file(const fs::path& path) {
  return load_model(load_checkpoint(path));
}

// Integer latents of one dataset item under a model.
LatentTensor model_latents(const CompressionModel& model, const Tensor& item) {
  return quantize_round(model.config().image_mode() ? model.analysis(item) : item);
}

std::vector<Tensor> eval_dataset(const TrainConfig& cfg, int samples, std::uint64_t seed) {
  if (samples < 1) throw UsageError("samples must be >= 1");
  if (cfg.model.image_mode()) {
    return image_dataset(cfg.model.image_channels, cfg.image_size, samples, seed);
  }
  return synthetic_dataset(cfg.synthetic, samples, seed);
}

json rd_point_json(const RDPoint& p) {
  return {{"bpp", p.bpp},
          {"estimate_bpp", p.estimate_bpp},
          {"mse", p.mse},
          {"psnr", p.psnr},
          {"psnr_capped", p.psnr_capped}};
}

std::unique_ptr<CompressionModel> run_training(const TrainConfig& cfg, const Checkpoint* resume,
                                               int log_every) {
  const auto t0 = std::chrono::steady_clock::now();
  auto log = [&](std::int64_t step, const LossBreakdown& l) {
    if (log_every <= 0) return;
    if ((step + 1) % log_every != 0 && step + 1 != cfg.steps) return;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("step %lld/%d total=%s rate_latent=%s rate_hyper=%s mse=%s lr=%g t=%.1fs\n",
                static_cast<long long>(step + 1), cfg.steps, fmt(l.total).c_str(),
                fmt(l.rate_latent).c_str(), fmt(l.rate_hyper).c_str(), fmt(l.mse).c_str(),
                learning_rate(cfg, step), secs);
    std::fflush(stdout);
  };
  TrainResult result = train(cfg, resume, log);
  return std::move(result.model);
}

// ---- subcommands ----------------------------------------------------------

struct Args {
  std::vector<std::string> argv;
  // One set per subcommand; `config` is the parsed one.
  std::deque<ConfigOptions> config_sets;
  ConfigOptions config;
  std::string model;
  std::string input;
  std::vector<std::string> inputs;
  std::string output;
  std::string resume;
  std::string reference;
  std::string test;
  std::string kinds = "spatial2d,mask3d,grouped";
  std::string group_list = "4,8,12";
  std::string lambdas = "0.0035,0.0067,0.0130,0.0250";
  int samples = 8;
  int reps = 3;
  int log_every = 100;
  bool save_latents = false;
  std::uint64_t eval_seed = 999;
};

int cmd_train(const Args& a) {
  TrainConfig cfg = a.config.resolve("train_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "train", a.argv, {{"resume", a.resume}, {"log_every", a.log_every}});
  std::unique_ptr<Checkpoint> resume;
  if (!a.resume.empty()) resume = std::make_unique<Checkpoint>(load_checkpoint(a.resume));
  auto model = run_training(cfg, resume.get(), a.log_every);
  std::printf("wrote %s (fingerprint %016llx)\n", (cfg.out_dir / "final.ckpt").c_str(),
              static_cast<unsigned long long>(model->fingerprint()));
  return kExitOk;
}

int cmd_encode(const Args& a) {
  TrainConfig cfg = a.config.resolve("encode_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "encode", a.argv,
             {{"model", a.model}, {"input", a.input}, {"output", a.output}});
  auto model = load_model_file(a.model);
  const LatentTensor latents = load_latents(a.input);
  const auto bytes = model->compress(latents);
  write_bytes(a.output, bytes);
  std::printf("%s: %zu bytes, %.4f bits per latent element\n", a.output.c_str(), bytes.size(),
              8.0 * static_cast<double>(bytes.size()) / static_cast<double>(latents.size()));
  return kExitOk;
}

int cmd_decode(const Args& a) {
  TrainConfig cfg = a.config.resolve("decode_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "decode", a.argv,
             {{"model", a.model}, {"input", a.input}, {"output", a.output}});
  auto model = load_model_file(a.model);
  const LatentTensor latents = model->decompress(read_bytes(a.input));
  save_latents(a.output, latents);
  std::printf("%s: %dx%dx%d latents\n", a.output.c_str(), latents.channels(), latents.height(),
              latents.width());
  return kExitOk;
}

int cmd_eval_rd(const Args& a) {
  TrainConfig cfg = a.config.resolve("eval_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "eval-rd", a.argv,
             {{"model", a.model}, {"samples", a.samples}, {"eval_seed", a.eval_seed}});
  auto model = load_model_file(a.model);
  cfg.model = model->config();
  const RDPoint p = eval_rd(*model, eval_dataset(cfg, a.samples, a.eval_seed));
  json out = rd_point_json(p);
  out["kind"] = context_kind_name(model->context().kind());
  out["groups"] = model->config().context.groups;
  out["lambda"] = model->config().lambda;
  write_text(cfg.out_dir / "rd_point.json", out.dump(2) + "\n");
  std::printf("bpp=%.4f estimate_bpp=%.4f mse=%.6g psnr=%.3f%s\n", p.bpp, p.estimate_bpp, p.mse,
              p.psnr, p.psnr_capped ? " (capped)" : "");
  return kExitOk;
}

int cmd_analyze_mad(const Args& a) {
  TrainConfig cfg = a.config.resolve("mad_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "analyze-mad", a.argv,
             {{"model", a.model}, {"inputs", a.inputs}, {"samples", a.samples},
              {"eval_seed", a.eval_seed}, {"save_latents", a.save_latents}});
  std::vector<LatentTensor> batch;
  json summary;
  std::vector<int> sources;
  if (!a.inputs.empty()) {
    for (const auto& path : a.inputs) batch.push_back(load_latents(path));
    summary["source"] = "files";
  } else if (!a.model.empty()) {
    auto model = load_model_file(a.model);
    cfg.model = model->config();
    for (const Tensor& item : eval_dataset(cfg, a.samples, a.eval_seed)) {
      batch.push_back(model_latents(*model, item));
    }
    summary["source"] = "model";
  } else {
    const SyntheticLatentSpec spec = cfg.synthetic.resolve();
    for (const Tensor& item : synthetic_dataset(spec, a.samples, a.eval_seed)) {
      batch.push_back(quantize_round(item));
    }
    sources = spec.sources();
    summary["source"] = "synthetic";
  }
  if (a.save_latents) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      save_latents(cfg.out_dir / ("latents_" + std::to_string(i) + ".ccct"), batch[i]);
    }
  }
  const MatchReport report = mad_match(batch);
  write_text(cfg.out_dir / "mad.csv", report.to_csv());
  summary["channels"] = batch.front().channels();
  summary["tensors"] = batch.size();
  summary["non_adjacent_fraction"] = report.non_adjacent_fraction();
  std::printf("non-adjacent matches: %.1f%%\n", 100.0 * report.non_adjacent_fraction());
  if (!sources.empty()) {
    const double rec = planted_recovery(report, sources);
    summary["planted_recovery"] = rec;
    std::printf("planted sources recovered: %.1f%%\n", 100.0 * rec);
  }
  write_text(cfg.out_dir / "mad.json", summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_bd_rate(const Args& a) {
  TrainConfig cfg = a.config.resolve("bd_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "bd-rate", a.argv, {{"reference", a.reference}, {"test", a.test}});
  const RDCurve ref = RDCurve::from_csv(read_text(a.reference));
  const RDCurve test = RDCurve::from_csv(read_text(a.test));
  const double d = bd_rate(ref, test);
  json out = {{"reference", a.reference}, {"test", a.test}, {"metric", ref.metric},
              {"bd_rate_percent", d}};
  write_text(cfg.out_dir / "bd_rate.json", out.dump(2) + "\n");
  std::printf("BD-rate %+.4f%%\n", d);
  return kExitOk;
}

int cmd_profile(const Args& a) {
  TrainConfig cfg = a.config.resolve("profile_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "profile", a.argv, {{"kinds", a.kinds}, {"reps", a.reps}});
  if (a.reps < 1) throw UsageError("reps must be >= 1");
  std::vector<ContextKind> kinds;
  {
    std::stringstream ss(a.kinds);
    std::string item;
    try {
      while (std::getline(ss, item, ',')) kinds.push_back(parse_context_kind(item));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  SyntheticLatentSpec spec = cfg.synthetic;
  spec.channels = cfg.model.context.channels;
  const LatentTensor latents = quantize_round(generate_synthetic_latents(spec.resolve(), 1));
  std::string csv = ScheduleProfile::csv_header() + "\n";
  for (ContextKind kind : kinds) {
    ModelConfig mc = cfg.model;
    mc.context.kind = kind;
    CompressionModel model(mc.resolve());
    const Tensor psi = model.psi(model.hyper_latents(latents.to_tensor()), latents.height(),
                                 latents.width());
    const ScheduleProfile prof = profile_codec(model.context(), latents, psi, a.reps);
    csv += prof.csv_row() + "\n";
    std::printf("%s steps=%llu enc=%.2fms dec=%.2fms%s\n",
                std::string(context_kind_name(kind)).c_str(),
                static_cast<unsigned long long>(prof.steps), prof.encode_ms, prof.decode_ms,
                prof.single_sample ? " (single sample)" : "");
  }
  write_text(cfg.out_dir / "profile.csv", csv);
  return kExitOk;
}

int cmd_sweep_groups(const Args& a) {
  TrainConfig cfg = a.config.resolve("sweep_out", false);
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "sweep-groups", a.argv,
             {{"group_list", a.group_list}, {"lambdas", a.lambdas}, {"samples", a.samples},
              {"eval_seed", a.eval_seed}, {"log_every", a.log_every}});
  std::vector<int> groups;
  for (double g : parse_number_list(a.group_list, "group_list")) {
    groups.push_back(static_cast<int>(g));
  }
  const std::vector<double> lambdas = parse_number_list(a.lambdas, "lambdas");
  if (!cfg.model.image_mode()) {
    std::printf("sweep-groups needs distortion; using image_channels=1\n");
    cfg.model.image_channels = 1;
  }
  cfg.model.context.kind = ContextKind::kGrouped;
  const fs::path root = cfg.out_dir;
  const auto dataset = eval_dataset(cfg, a.samples, a.eval_seed);

  std::map<int, RDCurve> curves;
  json summary;
  for (int g : groups) {
    RDCurve curve;
    curve.kind = "grouped";
    curve.groups = g;
    for (double lambda : lambdas) {
      TrainConfig run = cfg;
      run.model.context.groups = g;
      run.model.lambda = lambda;
      try {
        run.model = run.model.resolve();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      run.out_dir = root / ("G" + std::to_string(g) + "_lambda" + fmt(lambda));
      std::printf("training G=%d lambda=%g\n", g, lambda);
      std::fflush(stdout);
      auto model = run_training(run, nullptr, a.log_every);
      const RDPoint p = eval_rd(*model, dataset);
      curve.points.push_back({p.bpp, p.psnr});
      curve.lambdas.push_back(lambda);
      json entry = rd_point_json(p);
      entry["lambda"] = lambda;
      summary["points"]["G" + std::to_string(g)].push_back(entry);
      std::printf("G=%d lambda=%g bpp=%.4f psnr=%.3f\n", g, lambda, p.bpp, p.psnr);
    }
    std::vector<std::size_t> order(curve.points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return curve.points[x].bpp < curve.points[y].bpp;
    });
    RDCurve sorted = curve;
    for (std::size_t i = 0; i < order.size(); ++i) {
      sorted.points[i] = curve.points[order[i]];
      sorted.lambdas[i] = curve.lambdas[order[i]];
    }
    write_text(root / ("rd_G" + std::to_string(g) + ".csv"), sorted.to_csv());
    curves[g] = sorted;
  }

  json comparisons = json::array();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      json c = {{"reference_groups", groups[i]}, {"test_groups", groups[j]}};
      try {
        c["bd_rate_percent"] = bd_rate(curves[groups[i]], curves[groups[j]]);
      } catch (const std::exception& e) {
        c["bd_rate_percent"] = nullptr;
        c["error"] = e.what();
      }
      comparisons.push_back(c);
    }
  }
  summary["comparisons"] = comparisons;
  write_text(root / "bd_rate.json", summary.dump(2) + "\n");
  for (const auto& c : comparisons) {
    if (c["bd_rate_percent"].is_null()) {
      std::printf("G=%d -> G=%d: BD-rate unavailable (%s)\n", c["reference_groups"].get<int>(),
                  c["test_groups"].get<int>(), c["error"].get<std::string>().c_str());
    } else {
      std::printf("G=%d -> G=%d: BD-rate %+.3f%%\n", c["reference_groups"].get<int>(),
                  c["test_groups"].get<int>(), c["bd_rate_percent"].get<double>());
    }
  }
  return kExitOk;
}

// ---- selftest ---------------------------------------------------------------

bool report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  return ok;
}

bool selftest_roundtrip() {
  bool all = true;
  for (ContextKind kind : {ContextKind::kSpatial2d, ContextKind::kMask3d, ContextKind::kGrouped}) {
    int ok = 0;
    constexpr int kCases = 5;
    for (int s = 0; s < kCases; ++s) {
      ModelConfig mc;
      mc.context.kind = kind;
      mc.context.channels = 8;
      mc.context.groups = 2;
      mc.seed = 100 + static_cast<std::uint64_t>(s);
      CompressionModel model(mc.resolve());
      Rng rng = Rng::derive(7, static_cast<std::uint64_t>(s));
      LatentTensor y(8, 5, 6);
      for (std::size_t i = 0; i < y.size(); ++i) {
        // Mostly small values with occasional escapes.
        y[i] = rng.uniform() < 0.05 ? rng.uniform_int(-500, 500) : rng.uniform_int(-3, 3);
      }
      if (model.decompress(model.compress(y)) == y) ++ok;
    }
    all &= report("roundtrip." + std::string(context_kind_name(kind)), ok == kCases,
                  std::to_string(ok) + "/" + std::to_string(kCases) + " streams decoded exactly");
  }
  return all;
}

bool selftest_gradients() {
  ModelConfig mc;
  mc.context.channels = 4;
  mc.context.groups = 2;
  mc.image_channels = 1;
  mc.seed = 3;
  CompressionModel model(mc.resolve());
  const Tensor image = generate_synthetic_image(1, 16, 16, 5);
  const GradientCheckResult r = check_gradients(model, image, 11);
  char detail[160];
  std::snprintf(detail, sizeof detail, "%zu parameters, %zu mismatches, max rel err %.2e",
                r.checked, r.failed, r.max_rel_error);
  return report("gradients", r.failed == 0 && r.checked > 0, detail);
}

bool selftest_schedule() {
  struct Shape {
    int c, h, w, g;
  };
  const Shape shapes[] = {{8, 3, 4, 2}, {8, 5, 2, 4}, {16, 4, 4, 8}};
  bool all = true;
  for (ContextKind kind : {ContextKind::kSpatial2d, ContextKind::kMask3d, ContextKind::kGrouped}) {
    int ok = 0;
    for (const Shape& s : shapes) {
      ModelConfig mc;
      mc.context.kind = kind;
      mc.context.channels = s.c;
      mc.context.groups = s.g;
      CompressionModel model(mc.resolve());
      CodingTrace trace;
      model.compress(LatentTensor(s.c, s.h, s.w), &trace);
      CodingTrace dtrace;
      model.decompress(model.compress(LatentTensor(s.c, s.h, s.w)), &dtrace);
      const std::uint64_t want = serial_ops(kind, s.c, s.h, s.w, s.g);
      if (trace.serial_steps == want && dtrace.serial_steps == want) ++ok;
    }
    all &= report("schedule." + std::string(context_kind_name(kind)),
                  ok == static_cast<int>(std::size(shapes)),
                  std::to_string(ok) + "/" + std::to_string(std::size(shapes)) +
                      " shapes match the closed form");
  }
  return all;
}

int cmd_selftest(const Args& a) {
  TrainConfig cfg = a.config.resolve("selftest_out");
  DirectoryLock lock(cfg.out_dir);
  record_run(cfg, "selftest", a.argv, json::object());
  bool ok = selftest_roundtrip();
  ok &= selftest_schedule();
  ok &= selftest_gradients();
  std::printf("selftest %s\n", ok ? "passed" : "FAILED");
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossctx: grouped cross-channel context entropy coding toolkit"};
  app.set_version_flag("--version", CROSSCTX_VERSION);
  app.require_subcommand(1);
  app.fallthrough(false);

  Args a;
  a.argv.assign(argv, argv + argc);
  std::map<CLI::App*, ConfigOptions*> config_of;
  auto with_config = [&](CLI::App* sub) {
    config_of[sub] = &a.config_sets.emplace_back();
    config_of[sub]->attach(sub);
    return sub;
  };
  auto need_model = [&](CLI::App* sub) {
    sub->add_option("--model", a.model, "model checkpoint")->required()->check(CLI::ExistingFile);
  };

  auto* train = with_config(app.add_subcommand("train", "train a model"));
  train->add_option("--resume", a.resume, "continue from a checkpoint")
      ->check(CLI::ExistingFile);
  train->add_option("--log_every", a.log_every, "log line every N steps")->capture_default_str();

  auto* encode = with_config(app.add_subcommand("encode", "latent tensor file to bitstream"));
  need_model(encode);
  encode->add_option("--input", a.input, "CCCT latent tensor file")
      ->required()
      ->check(CLI::ExistingFile);
  encode->add_option("--output", a.output, "bitstream file")->required();

  auto* decode = with_config(app.add_subcommand("decode", "bitstream to latent tensor file"));
  need_model(decode);
  decode->add_option("--input", a.input, "bitstream file")->required()->check(CLI::ExistingFile);
  decode->add_option("--output", a.output, "CCCT latent tensor file")->required();

  auto* eval = with_config(app.add_subcommand("eval-rd", "rate and distortion of a model"));
  need_model(eval);
  eval->add_option("--samples", a.samples, "evaluation items")->capture_default_str();
  eval->add_option("--eval_seed", a.eval_seed, "evaluation data seed")->capture_default_str();

  auto* mad = with_config(app.add_subcommand(
      "analyze-mad", "matched-channel analysis of latent files, model latents or synthetic data"));
  mad->add_option("--input", a.inputs, "CCCT latent tensor files")->check(CLI::ExistingFile);
  mad->add_option("--model", a.model, "analyze this model's latents")->check(CLI::ExistingFile);
  mad->add_option("--samples", a.samples, "generated items")->capture_default_str();
  mad->add_option("--eval_seed", a.eval_seed, "data seed")->capture_default_str();
  mad->add_flag("--save_latents", a.save_latents, "also write the analyzed tensors as CCCT files");

  auto* bd = with_config(app.add_subcommand("bd-rate", "BD-rate between two RD curve CSVs"));
  bd->add_option("--reference", a.reference, "reference curve CSV")
      ->required()
      ->check(CLI::ExistingFile);
  bd->add_option("--test", a.test, "test curve CSV")->required()->check(CLI::ExistingFile);

  auto* profile = with_config(app.add_subcommand("profile", "time encode and decode"));
  profile->add_option("--kinds", a.kinds, "comma-separated context kinds")->capture_default_str();
  profile->add_option("--reps", a.reps, "timed repetitions")->capture_default_str();

  auto* sweep = with_config(
      app.add_subcommand("sweep-groups", "train and evaluate several group counts"));
  sweep->add_option("--group_list", a.group_list, "group counts")->capture_default_str();
  sweep->add_option("--lambdas", a.lambdas, "lambda per RD point")->capture_default_str();
  sweep->add_option("--samples", a.samples, "evaluation items")->capture_default_str();
  sweep->add_option("--eval_seed", a.eval_seed, "evaluation data seed")->capture_default_str();
  sweep->add_option("--log_every", a.log_every, "log line every N steps")->capture_default_str();

  auto* selftest = with_config(app.add_subcommand(
      "selftest", "round-trip, gradient and schedule checks"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  for (const auto& [sub, opts] : config_of) {
    if (sub->parsed()) a.config = *opts;
  }

  try {
    if (*train) return cmd_train(a);
    if (*encode) return cmd_encode(a);
    if (*decode) return cmd_decode(a);
    if (*eval) return cmd_eval_rd(a);
    if (*mad) return cmd_analyze_mad(a);
    if (*bd) return cmd_bd_rate(a);
    if (*profile) return cmd_profile(a);
    if (*sweep) return cmd_sweep_groups(a);
    if (*selftest) return cmd_selftest(a);
  } catch (const UsageError& e) {
    std::cerr << "crossctx: usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "crossctx: error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
