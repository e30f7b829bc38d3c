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

// Full compression model: optional toy autoencoder, hyper branch,
// factorized prior for the hyper latents and a context model bundle.
//
// The hyper branch maps latents (N,H,W) to hyper latents (Nz, ceil(H/2),
// ceil(W/2)) with one stride-2 3x3 conv, and hyper latents back to psi
// (2N,H,W) with nearest upsampling followed by a 3x3 conv.

#ifndef CROSSCTX_MODEL_H_
#define CROSSCTX_MODEL_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "crossctx/checkpoint.h"
#include "crossctx/codec.h"
#include "crossctx/context_pipeline.h"
#include "crossctx/layers.h"

namespace crossctx {

struct ModelConfig {
  ContextConfig context;
  // 0 selects max(2, N / 4).
  int hyper_channels = 0;
  // Image channels of the toy autoencoder; 0 means the model works on
  // latents directly.
  int image_channels = 0;
  double lambda = 0.0130;
  // Init seed; recorded, not part of the architecture.
  std::uint64_t seed = 1;

  ModelConfig resolve() const;
  bool image_mode() const { return image_channels > 0; }
  std::map<std::string, std::string> to_meta() const;
  static ModelConfig from_meta(const std::map<std::string, std::string>& meta);
};

// Downsampling factor of the toy analysis transform per spatial axis.
inline constexpr int kImageToLatentStride = 4;

class CompressionModel {
 public:
  explicit CompressionModel(const ModelConfig& config);
  CompressionModel(const CompressionModel&) = delete;
  CompressionModel& operator=(const CompressionModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const ContextModelBundle& context() const { return *context_; }
  int channels() const { return config_.context.channels; }
  int hyper_channels() const { return config_.hyper_channels; }

  // Differentiable pieces.
  Var analysis(Tape& tape, Var image) const;
  Var synthesis(Tape& tape, Var latents) const;
  Var hyper_analysis(Tape& tape, Var latents) const;
  Var hyper_synthesis(Tape& tape, Var hyper_latents, int height, int width) const;
  Var prior_loc(Tape& tape) const { return tape.parameter(*prior_loc_); }
  Var prior_log_scale(Tape& tape) const { return tape.parameter(*prior_log_scale_); }

  Tensor analysis(const Tensor& image) const;
  Tensor synthesis(const Tensor& latents) const;
  // round(h_a(latents)).
  LatentTensor hyper_latents(const Tensor& latents) const;
  Tensor psi(const LatentTensor& hyper_latents, int height, int width) const;
  FactorizedPrior prior() const;

  // Weights-only checkpoint; its bytes define the fingerprint.
  Checkpoint weights_checkpoint() const;
  std::uint64_t fingerprint() const;
  void load_weights(const Checkpoint& ckpt);

  // Complete "CCCB" stream for integer latents.
  std::vector<std::uint8_t> compress(const LatentTensor& latents, CodingTrace* trace = nullptr,
                                     double* hyper_table_bits = nullptr) const;
  // Throws FormatError on fingerprint or shape mismatch.
  LatentTensor decompress(std::span<const std::uint8_t> bytes,
                          CodingTrace* trace = nullptr) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
  std::unique_ptr<ContextModelBundle> context_;
  Conv2dLayer ga1_, ga2_, gs1_, gs2_;
  Conv2dLayer ha_, hs_;
  Parameter* prior_loc_ = nullptr;
  Parameter* prior_log_scale_ = nullptr;
};

// Loads a model from a checkpoint holding both config metadata and weights
// (extra "adam." tensors are ignored).
std::unique_ptr<CompressionModel> load_model(const Checkpoint& ckpt);

}  // namespace crossctx

#endif  // CROSSCTX_MODEL_H_
