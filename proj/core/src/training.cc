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

#include "crossctx/training.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "crossctx/binary_io.h"

namespace crossctx {
namespace {

std::string fmt_double(double v) {
  // Shortest text that reads back to the same double.
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

// Separable box blur with periodic borders.
void box_blur(std::span<double> plane, int h, int w, int r) {
  if (r <= 0) return;
  std::vector<double> tmp(plane.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += plane[static_cast<std::size_t>(y * w + ((x + d) % w + w) % w)];
      tmp[static_cast<std::size_t>(y * w + x)] = s / (2 * r + 1);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += tmp[static_cast<std::size_t>(((y + d) % h + h) % h * w + x)];
      plane[static_cast<std::size_t>(y * w + x)] = s / (2 * r + 1);
    }
  }
}

Tensor crop_tensor(const Tensor& t, int size, Rng& rng) {
  if (size <= 0 || (size >= t.height() && size >= t.width())) return t;
  const int ch = std::min(size, t.height());
  const int cw = std::min(size, t.width());
  const int oy = rng.uniform_int(0, t.height() - ch);
  const int ox = rng.uniform_int(0, t.width() - cw);
  Tensor out = Tensor::chw(t.channels(), ch, cw);
  for (int c = 0; c < t.channels(); ++c) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) out.at(c, y, x) = t.at(c, oy + y, ox + x);
    }
  }
  return out;
}

Tensor noise_like(const Tensor& t, Rng& rng) {
  Tensor n(t.dims());
  for (double& v : n.values()) v = rng.uniform(-0.5, 0.5);
  return n;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

SyntheticLatentSpec SyntheticLatentSpec::resolve() const {
  SyntheticLatentSpec s = *this;
  if (s.channels < 2 || s.height < 1 || s.width < 1) {
    throw std::invalid_argument("synthetic spec needs >= 2 channels and a non-empty grid");
  }
  if (s.max_distance == 0) s.max_distance = std::max(s.min_distance, s.channels / 4);
  if (s.min_distance < 1 || s.max_distance < s.min_distance) {
    throw std::invalid_argument("synthetic source distances must satisfy 1 <= min <= max");
  }
  if (s.matches.empty()) {
    // Each channel is the source of at most one other, so no two channels
    // share a source and neighbours in channel order stay unrelated.
    Rng rng = Rng::derive(s.seed, 0x6d61746368ULL);
    std::vector<char> used(static_cast<std::size_t>(s.channels), 0);
    std::vector<int> candidates;
    for (int t = 2; t < s.channels; ++t) {
      if (rng.uniform() < s.base_probability) continue;
      candidates.clear();
      for (int d = s.min_distance; d <= s.max_distance && d <= t; ++d) {
        if (used[static_cast<std::size_t>(t - d)] == 0) candidates.push_back(t - d);
      }
      if (candidates.empty()) continue;
      const int src = candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
      used[static_cast<std::size_t>(src)] = 1;
      s.matches.push_back({t, src});
    }
  }
  s.validate();
  return s;
}

void SyntheticLatentSpec::validate() const {
  if (!(amplitude > 0.0) || !(noise >= 0.0) || smoothing_radius < 0) {
    throw std::invalid_argument("synthetic amplitude must be > 0, noise >= 0, radius >= 0");
  }
  std::vector<int> seen(static_cast<std::size_t>(channels), 0);
  bool far = false;
  for (const MatchEntry& m : matches) {
    if (m.target < 0 || m.target >= channels || m.source < 0 || m.source >= m.target) {
      throw std::invalid_argument("match map entry " + std::to_string(m.target) + " <- " +
                                  std::to_string(m.source) + " does not precede its target");
    }
    if (seen[static_cast<std::size_t>(m.target)]++ != 0) {
      throw std::invalid_argument("channel " + std::to_string(m.target) + " has two sources");
    }
    far = far || m.target - m.source > 1;
  }
  if (!matches.empty() && !far) {
    throw std::invalid_argument("match map needs at least one non-adjacent source");
  }
}

std::vector<int> SyntheticLatentSpec::sources() const {
  std::vector<int> src(static_cast<std::size_t>(channels), -1);
  for (const MatchEntry& m : matches) src[static_cast<std::size_t>(m.target)] = m.source;
  return src;
}

Tensor generate_synthetic_latents(const SyntheticLatentSpec& spec, std::uint64_t sample_seed) {
  spec.validate();
  const std::vector<int> src = spec.sources();
  Rng rng = Rng::derive(spec.seed, sample_seed, 0x73616d70ULL);
  Tensor out = Tensor::chw(spec.channels, spec.height, spec.width);
  const double restore = 2 * spec.smoothing_radius + 1;  // blur divides the std by this
  for (int c = 0; c < spec.channels; ++c) {
    auto plane = out.channel(c);
    const int s = src[static_cast<std::size_t>(c)];
    if (s < 0) {
      for (double& v : plane) v = rng.normal();
      box_blur(plane, spec.height, spec.width, spec.smoothing_radius);
      for (double& v : plane) v *= restore * spec.amplitude;
    } else {
      auto source = out.channel(s);
      for (std::size_t i = 0; i < plane.size(); ++i) {
        plane[i] = spec.gain * source[i] + spec.noise * rng.normal();
      }
    }
  }
  return out;
}

Tensor generate_synthetic_image(int channels, int height, int width, std::uint64_t sample_seed) {
  Rng rng = Rng::derive(sample_seed, 0x696d67ULL);
  Tensor out = Tensor::chw(channels, height, width);
  std::vector<double> coarse(static_cast<std::size_t>(height) * width);
  std::vector<double> fine(coarse.size());
  for (double& v : coarse) v = rng.normal();
  for (double& v : fine) v = rng.normal();
  box_blur(coarse, height, width, 3);
  box_blur(fine, height, width, 1);
  for (double& v : coarse) v *= 7.0;
  for (double& v : fine) v *= 3.0;
  const int rects = 1 + rng.uniform_int(0, 2);
  std::vector<double> shapes(coarse.size(), 0.0);
  for (int r = 0; r < rects; ++r) {
    const int y0 = rng.uniform_int(0, height - 1);
    const int x0 = rng.uniform_int(0, width - 1);
    const int y1 = std::min(height, y0 + 2 + rng.uniform_int(0, height / 2));
    const int x1 = std::min(width, x0 + 2 + rng.uniform_int(0, width / 2));
    const double level = rng.uniform(-0.25, 0.25);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) shapes[static_cast<std::size_t>(y * width + x)] += level;
    }
  }
  for (int c = 0; c < channels; ++c) {
    const double tint = rng.uniform(-0.05, 0.05);
    auto plane = out.channel(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      plane[i] = std::clamp(0.5 + tint + 0.15 * coarse[i] + 0.05 * fine[i] + shapes[i],
                            0.0, 1.0);
    }
  }
  return out;
}

double pixels_for_latents(int height, int width) {
  return static_cast<double>(kImageToLatentStride * kImageToLatentStride) * height * width;
}

LossVars rd_loss(Tape& tape, const CompressionModel& model, const Tensor& input, Rng& rng) {
  const bool image = model.config().image_mode();
  Var x = tape.constant(input);
  Var y = image ? model.analysis(tape, x) : x;
  const Tensor& yv = y.value();
  const int h = yv.height();
  const int w = yv.width();
  Var y_tilde = ad::add(y, tape.constant(noise_like(yv, rng)));
  Var z = model.hyper_analysis(tape, y);
  Var z_tilde = ad::add(z, tape.constant(noise_like(z.value(), rng)));
  Var psi = model.hyper_synthesis(tape, z_tilde, h, w);
  const auto field = model.context().forward(tape, y_tilde, psi);
  const double pixels = image ? static_cast<double>(input.height()) * input.width()
                              : pixels_for_latents(h, w);
  Var ry = ad::scale(ad::gaussian_rate_bits(y_tilde, field.mu, field.sigma), 1.0 / pixels);
  Var rz = ad::scale(
      ad::logistic_rate_bits(z_tilde, model.prior_loc(tape), model.prior_log_scale(tape)),
      1.0 / pixels);
  LossVars out;
  out.parts.lambda = model.config().lambda;
  out.parts.rate_latent = ry.value()[0];
  out.parts.rate_hyper = rz.value()[0];
  out.total = ad::add(ry, rz);
  if (image) {
    Var d = ad::mse(model.synthesis(tape, y_tilde), x);
    out.parts.mse = d.value()[0];
    out.total = ad::add(out.total, ad::scale(d, model.config().lambda * 255.0 * 255.0));
  }
  out.parts.total = out.total.value()[0];
  return out;
}

Checkpoint training_checkpoint(const CompressionModel& model, const AdamState& adam) {
  Checkpoint ckpt = model.weights_checkpoint();
  ckpt.meta["train.step"] = std::to_string(adam.step);
  for (const auto& [name, mom] : adam.moments) {
    ckpt.tensors.emplace_back("adam.m." + name, mom.m);
    ckpt.tensors.emplace_back("adam.v." + name, mom.v);
  }
  return ckpt;
}

void restore_adam(AdamState& adam, const Checkpoint& ckpt) {
  adam.step = std::stoll(ckpt.meta_value("train.step"));
  adam.moments.clear();
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("adam.m.", 0) == 0) adam.moments[name.substr(7)].m = t;
    if (name.rfind("adam.v.", 0) == 0) adam.moments[name.substr(7)].v = t;
  }
  for (const auto& [name, mom] : adam.moments) {
    if (!mom.m.same_shape(mom.v)) throw FormatError("Adam moments of '" + name + "' disagree");
  }
}

double learning_rate(const TrainConfig& config, std::int64_t step) {
  const std::int64_t decay = config.decay_step > 0 ? config.decay_step : config.steps * 2 / 3;
  return step < decay ? config.lr : config.lr_decayed;
}

Tensor training_sample(const TrainConfig& config, std::int64_t step, int item) {
  Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(step),
                        static_cast<std::uint64_t>(item));
  const std::uint64_t sample_seed = rng.next_u64();
  Tensor t = config.model.image_mode()
                 ? generate_synthetic_image(config.model.image_channels, config.image_size,
                                            config.image_size, sample_seed)
                 : generate_synthetic_latents(config.synthetic, sample_seed);
  return crop_tensor(t, config.crop, rng);
}

TrainResult train(const TrainConfig& config_in, const Checkpoint* resume,
                  const std::function<void(std::int64_t, const LossBreakdown&)>& on_step) {
  TrainConfig config = config_in;
  config.synthetic = config.synthetic.resolve();
  config.model.seed = config.seed;
  if (config.batch < 1 || config.steps < 0) throw std::invalid_argument("bad batch or steps");
  if (!(config.lr > 0.0) || !(config.lr_decayed > 0.0)) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (!config.model.image_mode() && config.synthetic.channels != config.model.context.channels) {
    throw std::invalid_argument("synthetic channels differ from model channels");
  }
  if (config.model.image_mode() && (config.crop % kImageToLatentStride != 0)) {
    throw std::invalid_argument("image crops must be a multiple of 4");
  }

  TrainResult result;
  if (resume != nullptr) {
    result.model = load_model(*resume);
    restore_adam(result.adam, *resume);
  } else {
    result.model = std::make_unique<CompressionModel>(config.model);
  }
  CompressionModel& model = *result.model;
  AdamState& adam = result.adam;

  std::ofstream csv;
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    const auto path = config.out_dir / "metrics.csv";
    const bool fresh = resume == nullptr || !std::filesystem::exists(path);
    csv.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    if (fresh) csv << "step,rate_latent,rate_hyper,mse,total\n";
  }
  auto save = [&](const std::string& file) {
    if (!config.out_dir.empty()) save_checkpoint(config.out_dir / file, training_checkpoint(model, adam));
  };

  for (std::int64_t step = adam.step; step < config.steps; ++step) {
    model.params().zero_grad();
    LossBreakdown mean;
    try {
      for (int b = 0; b < config.batch; ++b) {
        const Tensor x = training_sample(config, step, b);
        Rng noise = Rng::derive(config.seed ^ 0x6e6f697365ULL, static_cast<std::uint64_t>(step),
                                static_cast<std::uint64_t>(b));
        Tape tape;
        LossVars lv = rd_loss(tape, model, x, noise);
        if (!std::isfinite(lv.parts.total)) throw NonFiniteError("loss is not finite");
        tape.backward(ad::scale(lv.total, 1.0 / config.batch));
        mean.rate_latent += lv.parts.rate_latent / config.batch;
        mean.rate_hyper += lv.parts.rate_hyper / config.batch;
        mean.mse += lv.parts.mse / config.batch;
        mean.total += lv.parts.total / config.batch;
      }
      mean.lambda = model.config().lambda;
      adam.lr = learning_rate(config, step);
      adam_step(model.params(), adam);
    } catch (const NonFiniteError& e) {
      save("last_good.ckpt");
      throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": " +
                             e.what());
    }
    result.history.push_back(mean);
    if (csv) {
      csv << step << ',' << fmt_double(mean.rate_latent) << ',' << fmt_double(mean.rate_hyper)
          << ',' << fmt_double(mean.mse) << ',' << fmt_double(mean.total) << '\n';
    }
    if (on_step) on_step(step, mean);
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
      save("latest.ckpt");
    }
  }
  save("final.ckpt");
  return result;
}

GradientCheckResult check_gradients(CompressionModel& model, const Tensor& input,
                                    std::uint64_t noise_seed, double step, double tolerance,
                                    double abs_floor) {
  auto loss = [&]() {
    Tape tape(false);
    Rng rng(noise_seed);
    return rd_loss(tape, model, input, rng).parts.total;
  };
  model.params().zero_grad();
  {
    Tape tape;
    Rng rng(noise_seed);
    LossVars lv = rd_loss(tape, model, input, rng);
    tape.backward(lv.total);
  }
  GradientCheckResult r;
  for (Parameter* p : model.params().all()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      const double analytic = p->grad[i];
      auto central = [&](double h) {
        p->value[i] = keep + h;
        const double up = loss();
        p->value[i] = keep - h;
        const double down = loss();
        p->value[i] = keep;
        return (up - down) / (2.0 * h);
      };
      auto rel_error = [&](double numeric) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
        return denom > 0.0 ? std::abs(analytic - numeric) / denom : 0.0;
      };
      double rel = rel_error(central(step));
      // A leaky-relu or clamp kink inside [x-h, x+h] spoils the difference,
      // and round-off swamps tiny gradients; try other steps before calling
      // it a mismatch.
      if (!(rel < tolerance)) {
        ++r.refined;
        for (double factor : {1e-1, 1e-2, 1e1}) {
          if (rel < tolerance) break;
          rel = std::min(rel, rel_error(central(step * factor)));
        }
      }
      ++r.checked;
      if (!(rel < tolerance)) ++r.failed;
      if (!(rel <= r.max_rel_error)) {
        r.max_rel_error = rel;
        r.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

double psnr_from_mse(double mse, bool* capped) {
  const bool cap = !(mse > 0.0) || 10.0 * std::log10(1.0 / mse) > kPsnrCap;
  if (capped != nullptr) *capped = cap;
  return cap ? kPsnrCap : 10.0 * std::log10(1.0 / mse);
}

RDPoint eval_rd(const CompressionModel& model, const std::vector<Tensor>& dataset,
                std::uint64_t noise_seed) {
  if (dataset.empty()) throw std::invalid_argument("eval_rd needs at least one item");
  const bool image = model.config().image_mode();
  RDPoint p;
  double mse_sum = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Tensor& item = dataset[i];
    const Tensor y = image ? model.analysis(item) : item;
    const LatentTensor q = quantize_round(y);
    const std::vector<std::uint8_t> bytes = model.compress(q);
    const LatentTensor back = model.decompress(bytes);
    if (!(back == q)) throw std::logic_error("decoded latents differ from the encoded ones");
    const double pixels = image ? static_cast<double>(item.height()) * item.width()
                                : pixels_for_latents(q.height(), q.width());
    p.bpp += 8.0 * static_cast<double>(bytes.size()) / pixels;
    Tape tape(false);
    Rng noise = Rng::derive(noise_seed, i);
    const LossVars lv = rd_loss(tape, model, item, noise);
    p.estimate_bpp += lv.parts.rate_latent + lv.parts.rate_hyper;
    if (image) {
      const Tensor rec = model.synthesis(back.to_tensor());
      double se = 0.0;
      for (std::size_t k = 0; k < rec.size(); ++k) se += (rec[k] - item[k]) * (rec[k] - item[k]);
      mse_sum += se / static_cast<double>(rec.size());
    }
  }
  const double n = static_cast<double>(dataset.size());
  p.bpp /= n;
  p.estimate_bpp /= n;
  p.mse = mse_sum / n;
  p.psnr = psnr_from_mse(p.mse, &p.psnr_capped);
  return p;
}

std::vector<Tensor> synthetic_dataset(const SyntheticLatentSpec& spec, int count,
                                      std::uint64_t seed) {
  const SyntheticLatentSpec s = spec.resolve();
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(generate_synthetic_latents(s, Rng::derive(seed, static_cast<std::uint64_t>(i), 0x65766c).next_u64()));
  }
  return out;
}

std::vector<Tensor> image_dataset(int channels, int size, int count, std::uint64_t seed) {
  std::vector<Tensor> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(generate_synthetic_image(
        channels, size, size, Rng::derive(seed, static_cast<std::uint64_t>(i), 0x65766c).next_u64()));
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " lacks '='");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

namespace {

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  T out{};
  try {
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(v, &used);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      out = std::stoull(v, &used);
    } else {
      out = static_cast<T>(std::stoll(v, &used));
    }
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw std::invalid_argument("config key '" + key + "' has invalid value '" + v + "'");
  }
  return out;
}

#define INT_FIELD(name, member)                                                       \
  Field {                                                                             \
    name, [](const TrainConfig& c) { return std::to_string(c.member); },              \
        [](TrainConfig& c, const std::string& v) { c.member = parse_number<int>(name, v); } \
  }
#define DOUBLE_FIELD(name, member)                                                       \
  Field {                                                                                \
    name, [](const TrainConfig& c) { return fmt_double(c.member); },                     \
        [](TrainConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      Field{"kind",
            [](const TrainConfig& c) { return std::string(context_kind_name(c.model.context.kind)); },
            [](TrainConfig& c, const std::string& v) { c.model.context.kind = parse_context_kind(v); }},
      Field{"channels", [](const TrainConfig& c) { return std::to_string(c.model.context.channels); },
            [](TrainConfig& c, const std::string& v) {
              c.model.context.channels = parse_number<int>("channels", v);
              c.synthetic.channels = c.model.context.channels;
            }},
      INT_FIELD("groups", model.context.groups),
      INT_FIELD("kernel", model.context.kernel),
      INT_FIELD("s2d_features", model.context.spatial_features),
      INT_FIELD("s2d_hidden1", model.context.spatial_hidden1),
      INT_FIELD("s2d_hidden2", model.context.spatial_hidden2),
      INT_FIELD("m3d_window", model.context.mask3d_window),
      INT_FIELD("m3d_features", model.context.mask3d_features),
      INT_FIELD("m3d_hidden", model.context.mask3d_hidden),
      DOUBLE_FIELD("sigma_min", model.context.scale.sigma_min),
      DOUBLE_FIELD("sigma_max", model.context.scale.sigma_max),
      INT_FIELD("num_scales", model.context.scale.num_scales),
      INT_FIELD("precision", model.context.scale.precision),
      INT_FIELD("alphabet_half", model.context.scale.alphabet_half),
      INT_FIELD("hyper_alphabet_half", model.context.scale.hyper_alphabet_half),
      INT_FIELD("hyper_channels", model.hyper_channels),
      INT_FIELD("image_channels", model.image_channels),
      DOUBLE_FIELD("lambda", model.lambda),
      INT_FIELD("height", synthetic.height),
      INT_FIELD("width", synthetic.width),
      DOUBLE_FIELD("base_probability", synthetic.base_probability),
      INT_FIELD("min_distance", synthetic.min_distance),
      INT_FIELD("max_distance", synthetic.max_distance),
      DOUBLE_FIELD("amplitude", synthetic.amplitude),
      INT_FIELD("smoothing_radius", synthetic.smoothing_radius),
      DOUBLE_FIELD("gain", synthetic.gain),
      DOUBLE_FIELD("noise", synthetic.noise),
      Field{"data_seed", [](const TrainConfig& c) { return std::to_string(c.synthetic.seed); },
            [](TrainConfig& c, const std::string& v) {
              c.synthetic.seed = parse_number<std::uint64_t>("data_seed", v);
              c.synthetic.matches.clear();
            }},
      INT_FIELD("image_size", image_size),
      INT_FIELD("batch", batch),
      INT_FIELD("steps", steps),
      DOUBLE_FIELD("lr", lr),
      DOUBLE_FIELD("lr_decayed", lr_decayed),
      INT_FIELD("decay_step", decay_step),
      INT_FIELD("crop", crop),
      Field{"seed", [](const TrainConfig& c) { return std::to_string(c.seed); },
            [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
      INT_FIELD("checkpoint_every", checkpoint_every),
      Field{"out_dir", [](const TrainConfig& c) { return c.out_dir.string(); },
            [](TrainConfig& c, const std::string& v) { c.out_dir = v; }},
  };
  return kFields;
}

#undef INT_FIELD
#undef DOUBLE_FIELD

}  // namespace

void apply_config(TrainConfig& config, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return k == f.key; });
    if (it == fs.end()) throw std::invalid_argument("unknown config key '" + k + "'");
    it->set(config, v);
  }
}

std::map<std::string, std::string> config_to_key_values(const TrainConfig& config) {
  std::map<std::string, std::string> kv;
  for (const Field& f : fields()) kv[f.key] = f.get(config);
  return kv;
}

}  // namespace crossctx
