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

#include "crossctx/context_pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace crossctx {
namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int meta_int(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw std::invalid_argument("context config lacks '" + key + "'");
  return std::stoi(it->second);
}

double meta_double(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw std::invalid_argument("context config lacks '" + key + "'");
  return std::stod(it->second);
}

std::size_t conv_count(int in, int out, int k) {
  return static_cast<std::size_t>(in) * out * k * k + static_cast<std::size_t>(out);
}

std::size_t spatial2d_count(int n, int m, int h1, int h2, int kernel) {
  return conv_count(n, m, kernel) + conv_count(2 * n + m, h1, 1) + conv_count(h1, h2, 1) +
         conv_count(h2, 2 * n, 1);
}

void check_psi(const Tensor& psi, int channels, int h, int w) {
  if (psi.empty()) throw std::invalid_argument("hyper information psi is missing");
  if (psi.rank() != 3 || psi.channels() != 2 * channels || psi.height() != h ||
      psi.width() != w) {
    throw ShapeError("psi has shape " + psi.shape_string() + ", expected (" +
                     std::to_string(2 * channels) + "," + std::to_string(h) + "," +
                     std::to_string(w) + ")");
  }
}

}  // namespace

ContextKind parse_context_kind(std::string_view name) {
  if (name == "spatial2d") return ContextKind::kSpatial2d;
  if (name == "mask3d") return ContextKind::kMask3d;
  if (name == "grouped" || name == "cross-channel-grouped") return ContextKind::kGrouped;
  throw std::invalid_argument("unknown context kind '" + std::string(name) + "'");
}

std::string_view context_kind_name(ContextKind kind) {
  switch (kind) {
    case ContextKind::kSpatial2d: return "spatial2d";
    case ContextKind::kMask3d: return "mask3d";
    case ContextKind::kGrouped: return "grouped";
  }
  return "?";
}

int GroupPartition::segment_of(int channel) const {
  if (channel < 0 || channel >= channels_) {
    throw std::out_of_range("channel " + std::to_string(channel) + " outside partition");
  }
  for (int k = 0; k < num_segments(); ++k) {
    if (channel < segments_[static_cast<std::size_t>(k)].end) return k;
  }
  return num_segments() - 1;
}

GroupPartition partition_channels(int n, int g) {
  if (g < 1) throw std::invalid_argument("group count must be >= 1");
  if (n < 2 || n % g != 0) {
    throw std::invalid_argument("channel count " + std::to_string(n) +
                                " is not divisible by group count " + std::to_string(g));
  }
  const int size = n / g;
  if (size < 2) throw std::invalid_argument("groups need at least two channels");
  GroupPartition p;
  p.channels_ = n;
  p.groups_ = g;
  p.segments_.push_back({0, 1});
  p.segments_.push_back({1, size});
  for (int j = 1; j < g; ++j) p.segments_.push_back({j * size, (j + 1) * size});
  return p;
}

SegmentWidths segment_widths(const GroupPartition& partition, int k) {
  const Segment& s = partition.segment(k);
  SegmentWidths w;
  w.cross_in = s.begin;
  w.spatial_in = s.end;
  w.cross_out = k == 0 ? 0 : 2 * s.size();
  w.spatial_out = 2 * s.size();
  w.hyper = 2 * partition.channels();
  w.e1 = (w.hyper + w.cross_out + w.spatial_out) / 2;
  w.e2 = w.e1 / 2;
  w.e3 = 2 * s.size();
  return w;
}

std::size_t grouped_parameter_count(int channels, int groups, int kernel) {
  const GroupPartition p = partition_channels(channels, groups);
  std::size_t total = 0;
  for (int k = 0; k < p.num_segments(); ++k) {
    const SegmentWidths w = segment_widths(p, k);
    if (k > 0) total += conv_count(w.cross_in, w.cross_out, 3) + 2 * conv_count(w.cross_out, w.cross_out, 3);
    total += conv_count(w.spatial_in, w.spatial_out, kernel);
    total += conv_count(w.hyper + w.cross_out + w.spatial_out, w.e1, 1);
    total += conv_count(w.e1, w.e2, 1) + conv_count(w.e2, w.e3, 1);
  }
  return total;
}

ContextConfig ContextConfig::resolve() const {
  ContextConfig c = *this;
  if (c.channels < 2) throw std::invalid_argument("context model needs at least 2 channels");
  if (c.kernel < 3 || c.kernel % 2 == 0) throw std::invalid_argument("kernel must be odd and >= 3");
  c.scale.validate();
  switch (c.kind) {
    case ContextKind::kGrouped:
      partition_channels(c.channels, c.groups);
      break;
    case ContextKind::kSpatial2d: {
      if (c.spatial_features == 0) c.spatial_features = 2 * c.channels;
      if (c.spatial_hidden1 == 0 || c.spatial_hidden2 == 0) {
        const int ref_g = c.channels % 8 == 0 && c.channels / 8 >= 2 ? 8 : 1;
        const std::size_t target = grouped_parameter_count(c.channels, ref_g, c.kernel);
        int best = 2;
        std::size_t best_gap = SIZE_MAX;
        for (int h1 = 2; h1 <= 64 * c.channels; ++h1) {
          const int h2 = std::max(1, h1 * 4 / 5);
          const std::size_t n = spatial2d_count(c.channels, c.spatial_features, h1, h2, c.kernel);
          const std::size_t gap = n > target ? n - target : target - n;
          if (gap < best_gap) {
            best_gap = gap;
            best = h1;
          }
          if (n > target) break;
        }
        c.spatial_hidden1 = best;
        c.spatial_hidden2 = std::max(1, best * 4 / 5);
      }
      if (c.spatial_features < 1 || c.spatial_hidden1 < 1 || c.spatial_hidden2 < 1) {
        throw std::invalid_argument("spatial2d widths must be positive");
      }
      break;
    }
    case ContextKind::kMask3d:
      if (c.mask3d_window < 1 || c.mask3d_features < 1 || c.mask3d_hidden < 1) {
        throw std::invalid_argument("mask3d widths must be positive");
      }
      break;
  }
  return c;
}

std::map<std::string, std::string> ContextConfig::to_meta() const {
  return {
      {"ctx.kind", std::string(context_kind_name(kind))},
      {"ctx.channels", std::to_string(channels)},
      {"ctx.groups", std::to_string(groups)},
      {"ctx.kernel", std::to_string(kernel)},
      {"ctx.s2d_features", std::to_string(spatial_features)},
      {"ctx.s2d_hidden1", std::to_string(spatial_hidden1)},
      {"ctx.s2d_hidden2", std::to_string(spatial_hidden2)},
      {"ctx.m3d_window", std::to_string(mask3d_window)},
      {"ctx.m3d_features", std::to_string(mask3d_features)},
      {"ctx.m3d_hidden", std::to_string(mask3d_hidden)},
      {"scale.sigma_min", fmt_double(scale.sigma_min)},
      {"scale.sigma_max", fmt_double(scale.sigma_max)},
      {"scale.num_scales", std::to_string(scale.num_scales)},
      {"scale.precision", std::to_string(scale.precision)},
      {"scale.alphabet_half", std::to_string(scale.alphabet_half)},
      {"scale.hyper_alphabet_half", std::to_string(scale.hyper_alphabet_half)},
  };
}

ContextConfig ContextConfig::from_meta(const std::map<std::string, std::string>& meta) {
  ContextConfig c;
  auto it = meta.find("ctx.kind");
  if (it == meta.end()) throw std::invalid_argument("context config lacks 'ctx.kind'");
  c.kind = parse_context_kind(it->second);
  c.channels = meta_int(meta, "ctx.channels");
  c.groups = meta_int(meta, "ctx.groups");
  c.kernel = meta_int(meta, "ctx.kernel");
  c.spatial_features = meta_int(meta, "ctx.s2d_features");
  c.spatial_hidden1 = meta_int(meta, "ctx.s2d_hidden1");
  c.spatial_hidden2 = meta_int(meta, "ctx.s2d_hidden2");
  c.mask3d_window = meta_int(meta, "ctx.m3d_window");
  c.mask3d_features = meta_int(meta, "ctx.m3d_features");
  c.mask3d_hidden = meta_int(meta, "ctx.m3d_hidden");
  c.scale.sigma_min = meta_double(meta, "scale.sigma_min");
  c.scale.sigma_max = meta_double(meta, "scale.sigma_max");
  c.scale.num_scales = meta_int(meta, "scale.num_scales");
  c.scale.precision = meta_int(meta, "scale.precision");
  c.scale.alphabet_half = meta_int(meta, "scale.alphabet_half");
  c.scale.hyper_alphabet_half = meta_int(meta, "scale.hyper_alphabet_half");
  return c.resolve();
}

CausalContext::CausalContext(int channels, int height, int width, bool audit)
    : c_(channels),
      h_(height),
      w_(width),
      audit_(audit),
      values_(Tensor::chw(channels, height, width)),
      decoded_(values_.size(), 0) {}

void CausalContext::set(int c, int y, int x, double v) {
  values_.at(c, y, x) = v;
  decoded_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x] = 1;
}

double CausalContext::read(int c, int y, int x) const {
  ++reads_;
  if (audit_ && !decoded(c, y, x)) {
    throw CausalityViolation("read of undecoded latent (" + std::to_string(c) + "," +
                             std::to_string(y) + "," + std::to_string(x) + ")");
  }
  return values_.at(c, y, x);
}

void CausalContext::require_channels(int begin, int end) const {
  const std::size_t plane = static_cast<std::size_t>(h_) * w_;
  for (std::size_t i = static_cast<std::size_t>(begin) * plane;
       i < static_cast<std::size_t>(end) * plane; ++i) {
    if (decoded_[i] == 0) {
      throw CausalityViolation("channel " + std::to_string(i / plane) +
                               " used as context before it was decoded");
    }
  }
}

ContextModelBundle::ContextModelBundle(const ContextConfig& config, ParameterSet& params,
                                       Rng& rng)
    : config_(config.resolve()),
      partition_(partition_channels(
          config_.channels,
          config_.kind == ContextKind::kGrouped ? config_.groups : 1)),
      table_(config_.scale) {
  const int n = config_.channels;
  const int k = config_.kernel;
  switch (config_.kind) {
    case ContextKind::kGrouped:
      for (int s = 0; s < partition_.num_segments(); ++s) {
        const std::string base = "ctx.seg" + std::to_string(s);
        const SegmentWidths w = segment_widths(partition_, s);
        SegmentNets nets;
        nets.segment = partition_.segment(s);
        nets.widths = w;
        if (s > 0) {
          nets.cross_in.emplace(params, base + ".cc_in",
                                ConvSpec::same(w.cross_in, w.cross_out, 3), rng);
          nets.cross_res.emplace(params, base + ".cc_res", w.cross_out, rng);
        }
        nets.spatial = Conv2dLayer(params, base + ".cs",
                                   ConvSpec::same(w.spatial_in, w.spatial_out, k, MaskKind::kCausalA),
                                   rng);
        nets.ep1 = Conv2dLayer(params, base + ".ep1",
                               ConvSpec::same(w.hyper + w.spatial_out + w.cross_out, w.e1, 1), rng);
        nets.ep2 = Conv2dLayer(params, base + ".ep2", ConvSpec::same(w.e1, w.e2, 1), rng);
        nets.ep3 = Conv2dLayer(params, base + ".ep3", ConvSpec::same(w.e2, w.e3, 1), rng);
        taps_.emplace_back(nets.spatial.spec());
        segments_.push_back(std::move(nets));
      }
      break;
    case ContextKind::kSpatial2d: {
      const int m = config_.spatial_features;
      s2d_spatial_ =
          Conv2dLayer(params, "ctx.cs", ConvSpec::same(n, m, k, MaskKind::kCausalA), rng);
      s2d_ep1_ = Conv2dLayer(params, "ctx.ep1",
                             ConvSpec::same(2 * n + m, config_.spatial_hidden1, 1), rng);
      s2d_ep2_ = Conv2dLayer(params, "ctx.ep2",
                             ConvSpec::same(config_.spatial_hidden1, config_.spatial_hidden2, 1),
                             rng);
      s2d_ep3_ =
          Conv2dLayer(params, "ctx.ep3", ConvSpec::same(config_.spatial_hidden2, 2 * n, 1), rng);
      taps_.emplace_back(s2d_spatial_.spec());
      break;
    }
    case ContextKind::kMask3d: {
      const int f = config_.mask3d_features;
      const int h = config_.mask3d_hidden;
      m3d_conv_ = Conv2dLayer(params, "ctx.m3d.conv",
                              ConvSpec::same(config_.mask3d_window, f, k, MaskKind::kCausal3d),
                              rng);
      m3d_ep1_ = Conv2dLayer(params, "ctx.m3d.ep1", ConvSpec::same(f + 2, h, 1), rng);
      m3d_ep2_ = Conv2dLayer(params, "ctx.m3d.ep2", ConvSpec::same(h, h, 1), rng);
      m3d_ep3_ = Conv2dLayer(params, "ctx.m3d.ep3", ConvSpec::same(h, 2, 1), rng);
      taps_.emplace_back(m3d_conv_.spec());
      break;
    }
  }
}

std::size_t ContextModelBundle::parameter_count() const {
  std::size_t total = 0;
  switch (config_.kind) {
    case ContextKind::kGrouped:
      for (const SegmentNets& s : segments_) {
        if (s.cross_in) total += s.cross_in->parameter_count() + s.cross_res->parameter_count();
        total += s.spatial.parameter_count() + s.ep1.parameter_count() +
                 s.ep2.parameter_count() + s.ep3.parameter_count();
      }
      break;
    case ContextKind::kSpatial2d:
      total = s2d_spatial_.parameter_count() + s2d_ep1_.parameter_count() +
              s2d_ep2_.parameter_count() + s2d_ep3_.parameter_count();
      break;
    case ContextKind::kMask3d:
      total = m3d_conv_.parameter_count() + m3d_ep1_.parameter_count() +
              m3d_ep2_.parameter_count() + m3d_ep3_.parameter_count();
      break;
  }
  return total;
}

Var ContextModelBundle::grouped_segment(Tape& tape, int k, Var latents, Var psi) const {
  const SegmentNets& nets = segments_[static_cast<std::size_t>(k)];
  Var cs = nets.spatial(tape, ad::slice_channels(latents, 0, nets.segment.end));
  std::vector<Var> parts{psi, cs};
  if (nets.cross_in) {
    Var prev = ad::slice_channels(latents, 0, nets.segment.begin);
    Var cc = (*nets.cross_res)(tape, ad::leaky_relu((*nets.cross_in)(tape, prev), kLeakySlope));
    parts.push_back(cc);
  }
  Var h = ad::leaky_relu(nets.ep1(tape, ad::concat_channels(parts)), kLeakySlope);
  h = ad::leaky_relu(nets.ep2(tape, h), kLeakySlope);
  return nets.ep3(tape, h);
}

Var ContextModelBundle::mask3d_channel(Tape& tape, int c, Var latents, Var psi) const {
  const int n = config_.channels;
  const int window = config_.mask3d_window;
  const int current = window / 2;
  const int height = latents.value().height();
  const int width = latents.value().width();
  std::vector<Var> slots;
  for (int j = 0; j < window; ++j) {
    const int ch = c - current + j;
    if (j > current || ch < 0 || ch >= n) {
      slots.push_back(tape.constant(Tensor::chw(1, height, width)));
    } else {
      slots.push_back(ad::slice_channels(latents, ch, ch + 1));
    }
  }
  Var feat = m3d_conv_(tape, ad::concat_channels(slots));
  const Var parts[] = {feat, ad::slice_channels(psi, c, c + 1),
                       ad::slice_channels(psi, n + c, n + c + 1)};
  Var h = ad::leaky_relu(m3d_ep1_(tape, ad::concat_channels(parts)), kLeakySlope);
  h = ad::leaky_relu(m3d_ep2_(tape, h), kLeakySlope);
  return m3d_ep3_(tape, h);
}

ContextModelBundle::FieldVars ContextModelBundle::forward(Tape& tape, Var latents,
                                                          Var psi) const {
  const Tensor& lv = latents.value();
  const int n = config_.channels;
  if (lv.rank() != 3 || lv.channels() != n) {
    throw ShapeError("context model expects " + std::to_string(n) + " latent channels, got " +
                     lv.shape_string());
  }
  check_psi(psi.value(), n, lv.height(), lv.width());
  const double lo = config_.scale.sigma_min;
  const double hi = config_.scale.sigma_max;
  std::vector<Var> mus;
  std::vector<Var> raw_sigmas;
  switch (config_.kind) {
    case ContextKind::kGrouped:
      for (int k = 0; k < partition_.num_segments(); ++k) {
        const int s = partition_.segment(k).size();
        Var e = grouped_segment(tape, k, latents, psi);
        mus.push_back(ad::slice_channels(e, 0, s));
        raw_sigmas.push_back(ad::slice_channels(e, s, 2 * s));
      }
      break;
    case ContextKind::kSpatial2d: {
      const Var parts[] = {psi, s2d_spatial_(tape, latents)};
      Var h = ad::leaky_relu(s2d_ep1_(tape, ad::concat_channels(parts)), kLeakySlope);
      h = ad::leaky_relu(s2d_ep2_(tape, h), kLeakySlope);
      Var e = s2d_ep3_(tape, h);
      mus.push_back(ad::slice_channels(e, 0, n));
      raw_sigmas.push_back(ad::slice_channels(e, n, 2 * n));
      break;
    }
    case ContextKind::kMask3d:
      for (int c = 0; c < n; ++c) {
        Var e = mask3d_channel(tape, c, latents, psi);
        mus.push_back(ad::slice_channels(e, 0, 1));
        raw_sigmas.push_back(ad::slice_channels(e, 1, 2));
      }
      break;
  }
  Var mu = mus.size() == 1 ? mus[0] : ad::concat_channels(mus);
  Var raw = raw_sigmas.size() == 1 ? raw_sigmas[0] : ad::concat_channels(raw_sigmas);
  return {mu, ad::clamp(ad::softplus(raw), lo, hi)};
}

GaussianField ContextModelBundle::estimate(const Tensor& latents, const Tensor& psi) const {
  Tape tape(false);
  FieldVars f = forward(tape, tape.constant(latents), tape.constant(psi));
  return {f.mu.value(), f.sigma.value()};
}

GaussianField ContextModelBundle::estimate_segment(int k, const Tensor& latents,
                                                   const Tensor& psi) const {
  if (config_.kind != ContextKind::kGrouped) {
    throw std::logic_error("segment estimates need the grouped context model");
  }
  if (k < 0 || k >= partition_.num_segments()) {
    throw std::out_of_range("segment index " + std::to_string(k) + " out of range");
  }
  const Segment& seg = partition_.segment(k);
  if (latents.rank() != 3 || latents.channels() < seg.end) {
    throw ShapeError("segment " + std::to_string(k) + " needs " + std::to_string(seg.end) +
                     " latent channels, got " + latents.shape_string());
  }
  check_psi(psi, config_.channels, latents.height(), latents.width());
  Tape tape(false);
  Var e = grouped_segment(tape, k, tape.constant(latents), tape.constant(psi));
  Var sigma = ad::clamp(ad::softplus(ad::slice_channels(e, seg.size(), 2 * seg.size())),
                        config_.scale.sigma_min, config_.scale.sigma_max);
  return {ad::slice_channels(e, 0, seg.size()).value(), sigma.value()};
}

int ContextModelBundle::num_passes() const {
  switch (config_.kind) {
    case ContextKind::kGrouped: return partition_.num_segments();
    case ContextKind::kSpatial2d: return 1;
    case ContextKind::kMask3d: return config_.channels;
  }
  return 0;
}

Segment ContextModelBundle::pass_channels(int pass) const {
  switch (config_.kind) {
    case ContextKind::kGrouped: return partition_.segment(pass);
    case ContextKind::kSpatial2d: return {0, config_.channels};
    case ContextKind::kMask3d: return {pass, pass + 1};
  }
  return {};
}

void ContextModelBundle::begin_pass(int pass, const CausalContext& ctx, const Tensor& psi,
                                    StepScratch& scratch) const {
  const Tensor& v = ctx.values();
  check_psi(psi, config_.channels, v.height(), v.width());
  if (config_.kind != ContextKind::kGrouped) return;
  const SegmentNets& nets = segments_[static_cast<std::size_t>(pass)];
  if (!nets.cross_in) {
    scratch.cross = Tensor();
    return;
  }
  ctx.require_channels(0, nets.segment.begin);
  scratch.cross = nets.cross_res->forward(
      leaky_relu(nets.cross_in->forward(v.slice_channels(0, nets.segment.begin)), kLeakySlope));
}

void ContextModelBundle::finish_params(std::span<const double> raw, std::span<double> mu,
                                       std::span<double> sigma) const {
  const std::size_t s = mu.size();
  for (std::size_t i = 0; i < s; ++i) {
    mu[i] = raw[i];
    sigma[i] = std::clamp(softplus(raw[s + i]), config_.scale.sigma_min, config_.scale.sigma_max);
  }
}

void ContextModelBundle::predict(int pass, int y, int x, const CausalContext& ctx,
                                 const Tensor& psi, StepScratch& scratch,
                                 std::span<double> mu, std::span<double> sigma) const {
  const Tensor& v = ctx.values();
  const int h = v.height();
  const int w = v.width();
  const int n = config_.channels;
  auto leaky_all = [](std::vector<double>& a) {
    for (double& t : a) t = leaky_relu(t, kLeakySlope);
  };
  auto& feat = scratch.feat;
  auto& h1 = scratch.h1;
  auto& h2 = scratch.h2;
  auto& out = scratch.out;
  const TapMask& taps = taps_[config_.kind == ContextKind::kGrouped ? static_cast<std::size_t>(pass) : 0];
  switch (config_.kind) {
    case ContextKind::kGrouped: {
      const SegmentNets& nets = segments_[static_cast<std::size_t>(pass)];
      const SegmentWidths& wd = nets.widths;
      feat.assign(static_cast<std::size_t>(wd.hyper + wd.spatial_out + wd.cross_out), 0.0);
      for (int j = 0; j < wd.hyper; ++j) feat[static_cast<std::size_t>(j)] = psi.at(j, y, x);
      std::span<double> cs(feat.data() + wd.hyper, static_cast<std::size_t>(wd.spatial_out));
      conv2d_at([&](int i, int iy, int ix) { return ctx.read(i, iy, ix); }, h, w,
                nets.spatial.weight(), nets.spatial.bias(), nets.spatial.spec(), taps, y, x, cs);
      for (int j = 0; j < wd.cross_out; ++j) {
        feat[static_cast<std::size_t>(wd.hyper + wd.spatial_out + j)] = scratch.cross.at(j, y, x);
      }
      h1.assign(static_cast<std::size_t>(wd.e1), 0.0);
      pointwise_at(feat, nets.ep1.weight(), nets.ep1.bias(), h1);
      leaky_all(h1);
      h2.assign(static_cast<std::size_t>(wd.e2), 0.0);
      pointwise_at(h1, nets.ep2.weight(), nets.ep2.bias(), h2);
      leaky_all(h2);
      out.assign(static_cast<std::size_t>(wd.e3), 0.0);
      pointwise_at(h2, nets.ep3.weight(), nets.ep3.bias(), out);
      break;
    }
    case ContextKind::kSpatial2d: {
      const int m = config_.spatial_features;
      feat.assign(static_cast<std::size_t>(2 * n + m), 0.0);
      for (int j = 0; j < 2 * n; ++j) feat[static_cast<std::size_t>(j)] = psi.at(j, y, x);
      std::span<double> cs(feat.data() + 2 * n, static_cast<std::size_t>(m));
      conv2d_at([&](int i, int iy, int ix) { return ctx.read(i, iy, ix); }, h, w,
                s2d_spatial_.weight(), s2d_spatial_.bias(), s2d_spatial_.spec(), taps, y, x, cs);
      h1.assign(static_cast<std::size_t>(config_.spatial_hidden1), 0.0);
      pointwise_at(feat, s2d_ep1_.weight(), s2d_ep1_.bias(), h1);
      leaky_all(h1);
      h2.assign(static_cast<std::size_t>(config_.spatial_hidden2), 0.0);
      pointwise_at(h1, s2d_ep2_.weight(), s2d_ep2_.bias(), h2);
      leaky_all(h2);
      out.assign(static_cast<std::size_t>(2 * n), 0.0);
      pointwise_at(h2, s2d_ep3_.weight(), s2d_ep3_.bias(), out);
      break;
    }
    case ContextKind::kMask3d: {
      const int c = pass;
      const int f = config_.mask3d_features;
      const int current = config_.mask3d_window / 2;
      feat.assign(static_cast<std::size_t>(f + 2), 0.0);
      std::span<double> fs(feat.data(), static_cast<std::size_t>(f));
      conv2d_at(
          [&](int j, int iy, int ix) {
            const int ch = c - current + j;
            if (j > current || ch < 0 || ch >= n) return 0.0;
            return ctx.read(ch, iy, ix);
          },
          h, w, m3d_conv_.weight(), m3d_conv_.bias(), m3d_conv_.spec(), taps, y, x, fs);
      feat[static_cast<std::size_t>(f)] = psi.at(c, y, x);
      feat[static_cast<std::size_t>(f + 1)] = psi.at(n + c, y, x);
      h1.assign(static_cast<std::size_t>(config_.mask3d_hidden), 0.0);
      pointwise_at(feat, m3d_ep1_.weight(), m3d_ep1_.bias(), h1);
      leaky_all(h1);
      h2.assign(static_cast<std::size_t>(config_.mask3d_hidden), 0.0);
      pointwise_at(h1, m3d_ep2_.weight(), m3d_ep2_.bias(), h2);
      leaky_all(h2);
      out.assign(2, 0.0);
      pointwise_at(h2, m3d_ep3_.weight(), m3d_ep3_.bias(), out);
      break;
    }
  }
  finish_params(out, mu, sigma);
}

GaussianField estimate_segment_params(const ContextModelBundle& bundle, int k,
                                      const Tensor& prev_latents,
                                      const Tensor& current_latents, const Tensor& psi) {
  if (bundle.kind() != ContextKind::kGrouped) {
    throw std::logic_error("segment estimates need the grouped context model");
  }
  const Segment& seg = bundle.partition().segment(k);
  if (current_latents.rank() != 3 || current_latents.channels() != seg.size()) {
    throw ShapeError("segment " + std::to_string(k) + " has " + std::to_string(seg.size()) +
                     " channels, got " + current_latents.shape_string());
  }
  if (seg.begin == 0) {
    if (!prev_latents.empty() && prev_latents.channels() != 0) {
      throw ShapeError("segment 0 takes no previous channels");
    }
    return bundle.estimate_segment(k, current_latents, psi);
  }
  if (prev_latents.rank() != 3 || prev_latents.channels() != seg.begin ||
      prev_latents.height() != current_latents.height() ||
      prev_latents.width() != current_latents.width()) {
    throw ShapeError("segment " + std::to_string(k) + " needs " + std::to_string(seg.begin) +
                     " previous channels of the same size, got " + prev_latents.shape_string());
  }
  const Tensor* parts[] = {&prev_latents, &current_latents};
  return bundle.estimate_segment(k, Tensor::concat_channels(parts), psi);
}

std::vector<Position> DependencyMap::dependencies(const Position& p) const {
  std::vector<Position> out;
  for (std::size_t q = 0; q < count(); ++q) {
    if (bits_[index(p) * count() + q] != 0) out.push_back(position(q));
  }
  return out;
}

std::vector<Position> causality_probe(const ContextModelBundle& bundle, const Tensor& latents,
                                      const Tensor& psi, const Position& p) {
  const GaussianField base = bundle.estimate(latents, psi);
  std::vector<Position> deps;
  Tensor probe = latents;
  for (int c = 0; c < latents.channels(); ++c) {
    for (int y = 0; y < latents.height(); ++y) {
      for (int x = 0; x < latents.width(); ++x) {
        const double keep = probe.at(c, y, x);
        probe.at(c, y, x) = keep + 1.0;
        const GaussianField f = bundle.estimate(probe, psi);
        probe.at(c, y, x) = keep;
        if (f.mu.at(p.c, p.y, p.x) != base.mu.at(p.c, p.y, p.x) ||
            f.sigma.at(p.c, p.y, p.x) != base.sigma.at(p.c, p.y, p.x)) {
          deps.push_back({c, y, x});
        }
      }
    }
  }
  return deps;
}

DependencyMap dependency_map(const ContextModelBundle& bundle, const Tensor& latents,
                             const Tensor& psi) {
  const GaussianField base = bundle.estimate(latents, psi);
  DependencyMap map(latents.channels(), latents.height(), latents.width());
  Tensor probe = latents;
  for (std::size_t qi = 0; qi < map.count(); ++qi) {
    const double keep = probe[qi];
    probe[qi] = keep + 1.0;
    const GaussianField f = bundle.estimate(probe, psi);
    probe[qi] = keep;
    const Position q = map.position(qi);
    for (std::size_t pi = 0; pi < map.count(); ++pi) {
      if (f.mu[pi] != base.mu[pi] || f.sigma[pi] != base.sigma[pi]) map.set(map.position(pi), q);
    }
  }
  return map;
}

bool legal_dependency(const ContextModelBundle& bundle, const Position& p, const Position& q) {
  const int r = bundle.config().kernel / 2;
  const bool earlier = q.y < p.y || (q.y == p.y && q.x < p.x);
  const bool near = std::abs(q.y - p.y) <= r && std::abs(q.x - p.x) <= r;
  switch (bundle.kind()) {
    case ContextKind::kGrouped: {
      const int sp = bundle.partition().segment_of(p.c);
      const int sq = bundle.partition().segment_of(q.c);
      if (sq < sp) return true;
      return sq == sp && earlier && near;
    }
    case ContextKind::kSpatial2d:
      return earlier && near;
    case ContextKind::kMask3d: {
      const int offset = q.c - p.c;
      const int current = bundle.config().mask3d_window / 2;
      if (offset > 0 || current + offset < 0) return false;
      return offset < 0 ? near : earlier && near;
    }
  }
  return false;
}

}  // namespace crossctx
