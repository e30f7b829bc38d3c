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

#include "crossctx/model.h"

#include <cstdio>
#include <stdexcept>
#include <string>

#include "crossctx/binary_io.h"

namespace crossctx {
namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::string& need(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("model metadata lacks '" + key + "'");
  return it->second;
}

ConvSpec strided(int in, int out, int k) {
  return {in, out, k, k, 2, k / 2, k / 2, MaskKind::kNone};
}

}  // namespace

ModelConfig ModelConfig::resolve() const {
  ModelConfig c = *this;
  c.context = context.resolve();
  if (c.hyper_channels == 0) c.hyper_channels = std::max(2, c.context.channels / 4);
  if (c.hyper_channels < 1) throw std::invalid_argument("hyper channel count must be positive");
  if (c.image_channels < 0) throw std::invalid_argument("image channel count must be >= 0");
  if (!(c.lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  return c;
}

std::map<std::string, std::string> ModelConfig::to_meta() const {
  auto meta = context.to_meta();
  meta["model.hyper_channels"] = std::to_string(hyper_channels);
  meta["model.image_channels"] = std::to_string(image_channels);
  meta["model.lambda"] = fmt_double(lambda);
  meta["model.seed"] = std::to_string(seed);
  return meta;
}

ModelConfig ModelConfig::from_meta(const std::map<std::string, std::string>& meta) {
  ModelConfig c;
  c.context = ContextConfig::from_meta(meta);
  c.hyper_channels = std::stoi(need(meta, "model.hyper_channels"));
  c.image_channels = std::stoi(need(meta, "model.image_channels"));
  c.lambda = std::stod(need(meta, "model.lambda"));
  c.seed = std::stoull(need(meta, "model.seed"));
  return c.resolve();
}

CompressionModel::CompressionModel(const ModelConfig& config) : config_(config.resolve()) {
  Rng rng = Rng::derive(config_.seed, 0x6d6f64656cULL);
  const int n = config_.context.channels;
  const int nz = config_.hyper_channels;
  if (config_.image_mode()) {
    const int ic = config_.image_channels;
    ga1_ = Conv2dLayer(params_, "ga.conv1", strided(ic, n, 5), rng);
    ga2_ = Conv2dLayer(params_, "ga.conv2", strided(n, n, 5), rng);
    gs1_ = Conv2dLayer(params_, "gs.conv1", ConvSpec::same(n, n, 5), rng);
    gs2_ = Conv2dLayer(params_, "gs.conv2", ConvSpec::same(n, ic, 5), rng);
  }
  ha_ = Conv2dLayer(params_, "ha.conv", strided(n, nz, 3), rng);
  hs_ = Conv2dLayer(params_, "hs.conv", ConvSpec::same(nz, 2 * n, 3), rng);
  prior_loc_ = &params_.add("prior.loc", Tensor({nz}));
  prior_log_scale_ = &params_.add("prior.log_scale", Tensor({nz}));
  context_ = std::make_unique<ContextModelBundle>(config_.context, params_, rng);
}

Var CompressionModel::analysis(Tape& tape, Var image) const {
  if (!config_.image_mode()) throw std::logic_error("model has no analysis transform");
  return ga2_(tape, ad::leaky_relu(ga1_(tape, image), kLeakySlope));
}

Var CompressionModel::synthesis(Tape& tape, Var latents) const {
  if (!config_.image_mode()) throw std::logic_error("model has no synthesis transform");
  // Copy the sizes: tape growth may move the value.
  const int height = latents.value().height();
  const int width = latents.value().width();
  Var h = ad::upsample_nearest(latents, 2 * height, 2 * width);
  h = ad::leaky_relu(gs1_(tape, h), kLeakySlope);
  h = ad::upsample_nearest(h, 4 * height, 4 * width);
  return gs2_(tape, h);
}

Var CompressionModel::hyper_analysis(Tape& tape, Var latents) const {
  return ha_(tape, latents);
}

Var CompressionModel::hyper_synthesis(Tape& tape, Var hyper_latents, int height,
                                      int width) const {
  return hs_(tape, ad::upsample_nearest(hyper_latents, height, width));
}

Tensor CompressionModel::analysis(const Tensor& image) const {
  Tape tape(false);
  return analysis(tape, tape.constant(image)).value();
}

Tensor CompressionModel::synthesis(const Tensor& latents) const {
  Tape tape(false);
  return synthesis(tape, tape.constant(latents)).value();
}

LatentTensor CompressionModel::hyper_latents(const Tensor& latents) const {
  Tape tape(false);
  return quantize_round(hyper_analysis(tape, tape.constant(latents)).value());
}

Tensor CompressionModel::psi(const LatentTensor& hyper_latents, int height, int width) const {
  Tape tape(false);
  return hyper_synthesis(tape, tape.constant(hyper_latents.to_tensor()), height, width).value();
}

FactorizedPrior CompressionModel::prior() const {
  const ScaleTableConfig& s = config_.context.scale;
  return FactorizedPrior(prior_loc_->value, prior_log_scale_->value, s.hyper_alphabet_half,
                         s.precision);
}

Checkpoint CompressionModel::weights_checkpoint() const {
  return capture_parameters(params_, config_.to_meta());
}

std::uint64_t CompressionModel::fingerprint() const {
  return fnv1a64(serialize_checkpoint(weights_checkpoint()));
}

void CompressionModel::load_weights(const Checkpoint& ckpt) {
  restore_parameters(params_, ckpt, "adam.");
}

std::vector<std::uint8_t> CompressionModel::compress(const LatentTensor& latents,
                                                     CodingTrace* trace,
                                                     double* hyper_table_bits) const {
  if (latents.channels() != channels()) {
    throw ShapeError("latents have " + std::to_string(latents.channels()) +
                     " channels, model expects " + std::to_string(channels()));
  }
  const LatentTensor z = hyper_latents(latents.to_tensor());
  Bitstream s;
  BitstreamHeader& h = s.header;
  h.channels = latents.channels();
  h.height = latents.height();
  h.width = latents.width();
  h.groups = config_.context.groups;
  h.kind = config_.context.kind;
  h.scale = config_.context.scale;
  h.fingerprint = fingerprint();
  h.lambda = config_.lambda;
  h.hyper_channels = z.channels();
  h.hyper_height = z.height();
  h.hyper_width = z.width();
  s.hyper_payload = encode_hyper(z, prior(), hyper_table_bits);
  s.latent_payload =
      encode_latents(latents, *context_, psi(z, latents.height(), latents.width()), trace);
  return serialize_bitstream(s);
}

LatentTensor CompressionModel::decompress(std::span<const std::uint8_t> bytes,
                                          CodingTrace* trace) const {
  const Bitstream s = parse_bitstream(bytes);
  const BitstreamHeader& h = s.header;
  if (h.fingerprint != fingerprint()) {
    throw FormatError("bitstream was encoded with a different model (fingerprint mismatch)");
  }
  if (h.channels != channels() || h.kind != config_.context.kind ||
      h.groups != config_.context.groups || !(h.scale == config_.context.scale) ||
      h.hyper_channels != hyper_channels()) {
    throw FormatError("bitstream header does not match the model configuration");
  }
  if (h.hyper_height != (h.height + 1) / 2 || h.hyper_width != (h.width + 1) / 2) {
    throw FormatError("bitstream hyper dims inconsistent with latent dims");
  }
  const LatentTensor z =
      decode_hyper(s.hyper_payload, prior(), h.hyper_channels, h.hyper_height, h.hyper_width);
  return decode_latents(s.latent_payload, *context_, psi(z, h.height, h.width), h.height,
                        h.width, trace);
}

std::unique_ptr<CompressionModel> load_model(const Checkpoint& ckpt) {
  auto model = std::make_unique<CompressionModel>(ModelConfig::from_meta(ckpt.meta));
  model->load_weights(ckpt);
  return model;
}

}  // namespace crossctx
