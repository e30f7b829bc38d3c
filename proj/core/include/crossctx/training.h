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

// Synthetic data, the rate-distortion loss, the training loop and RD
// evaluation.

#ifndef CROSSCTX_TRAINING_H_
#define CROSSCTX_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "crossctx/model.h"
#include "crossctx/optimizer.h"

namespace crossctx {

// A derived channel equals gain * source + noise; its source is an earlier
// channel. Generated match maps use every source at most once.
struct MatchEntry {
  int target = 0;
  int source = 0;
};

struct SyntheticLatentSpec {
  int channels = 64;
  int height = 16;
  int width = 16;
  // Chance that a channel (other than 0 and 1) is a fresh base channel.
  double base_probability = 0.25;
  // Source distance t - s drawn uniformly from [min_distance, max_distance];
  // max_distance 0 selects channels / 4.
  int min_distance = 2;
  int max_distance = 0;
  // Base channels: white Gaussian noise box-blurred with this radius
  // (periodic borders), rescaled to standard deviation `amplitude`.
  double amplitude = 4.0;
  int smoothing_radius = 1;
  double gain = 1.0;
  double noise = 0.5;
  // Seeds the match map; samples are seeded separately.
  std::uint64_t seed = 1;
  // Filled from `seed` by resolve() when empty.
  std::vector<MatchEntry> matches;

  SyntheticLatentSpec resolve() const;
  void validate() const;
  // Source of each channel, -1 for base channels.
  std::vector<int> sources() const;
};

// One (C,H,W) float sample; identical for identical (spec, sample_seed).
Tensor generate_synthetic_latents(const SyntheticLatentSpec& spec, std::uint64_t sample_seed);

// Smooth random grayscale-like pictures in [0, 1] for the toy autoencoder.
Tensor generate_synthetic_image(int channels, int height, int width, std::uint64_t sample_seed);

struct LossBreakdown {
  double rate_latent = 0.0;  // bits per pixel
  double rate_hyper = 0.0;   // bits per pixel
  double mse = 0.0;          // on [0, 1] pixels
  double lambda = 0.0;
  double total = 0.0;
};

// Pixel count a latent grid stands for (latent mode has no transform; the
// toy transform downsamples by 4 per axis).
double pixels_for_latents(int height, int width);

struct LossVars {
  Var total;
  LossBreakdown parts;
};

// Noise-quantized training loss for one item: (R_y + R_z) / pixels +
// lambda * 255^2 * MSE. `input` is an image in image mode, float latents
// otherwise. Noise is drawn from `rng`.
LossVars rd_loss(Tape& tape, const CompressionModel& model, const Tensor& input, Rng& rng);

struct TrainConfig {
  ModelConfig model;
  // Latent-mode data; its channel count follows the model's ("channels" key).
  SyntheticLatentSpec synthetic = [] {
    SyntheticLatentSpec spec;
    spec.channels = ContextConfig{}.channels;
    return spec;
  }();
  int image_size = 32;
  int batch = 4;
  int steps = 30000;
  // Learning rate drops from lr to lr_decayed at decay_step (0 = 2/3 of
  // steps).
  double lr = 1e-4;
  double lr_decayed = 5e-5;
  int decay_step = 0;
  // Square random crop of each training sample (0 = full size).
  int crop = 0;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;
  // When set, the metrics CSV and checkpoints go here.
  std::filesystem::path out_dir;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::unique_ptr<CompressionModel> model;
  AdamState adam;
  std::vector<LossBreakdown> history;
};

// Full training state (weights, Adam moments, step) as a checkpoint.
Checkpoint training_checkpoint(const CompressionModel& model, const AdamState& adam);
void restore_adam(AdamState& adam, const Checkpoint& ckpt);

double learning_rate(const TrainConfig& config, std::int64_t step);

// Runs config.steps steps in total. With `resume`, continues from its step
// count and reproduces the uninterrupted run exactly. `on_step` (optional)
// sees every step's mean loss.
TrainResult train(const TrainConfig& config, const Checkpoint* resume = nullptr,
                  const std::function<void(std::int64_t, const LossBreakdown&)>& on_step = {});

// Training inputs for (seed, step, item), cropped as configured.
Tensor training_sample(const TrainConfig& config, std::int64_t step, int item);

struct GradientCheckResult {
  std::size_t checked = 0;
  std::size_t failed = 0;
  // Elements re-measured with smaller steps.
  std::size_t refined = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]" of the largest error
};

// Compares backprop gradients of rd_loss against central differences for
// every parameter element. Noise is redrawn from `noise_seed` for each
// evaluation. The relative error is |a - n| / max(|a|, |n|, abs_floor).
// Elements that miss the tolerance are measured again with step / 10,
// step / 100 and 10 * step (kinks, round-off) and keep the best agreement.
GradientCheckResult check_gradients(CompressionModel& model, const Tensor& input,
                                    std::uint64_t noise_seed, double step = 1e-4,
                                    double tolerance = 1e-4, double abs_floor = 1e-6);

struct RDPoint {
  double bpp = 0.0;           // from actual bitstream bytes
  double estimate_bpp = 0.0;  // noise-relaxed rate of the same items
  double mse = 0.0;
  double psnr = 0.0;
  bool psnr_capped = false;
};

inline constexpr double kPsnrCap = 100.0;

double psnr_from_mse(double mse, bool* capped = nullptr);

// Encodes every item (images in image mode, float latents otherwise) and
// averages. Each stream is decoded again and checked against the input.
RDPoint eval_rd(const CompressionModel& model, const std::vector<Tensor>& dataset,
                std::uint64_t noise_seed = 7);

std::vector<Tensor> synthetic_dataset(const SyntheticLatentSpec& spec, int count,
                                      std::uint64_t seed);
std::vector<Tensor> image_dataset(int channels, int size, int count, std::uint64_t seed);

// Preset rate-distortion tradeoffs, kept in their original order.
inline constexpr double kLambdaPresets[] = {0.018, 0.0035, 0.0067, 0.0130, 0.0250, 0.0483};
// Latent channel count used with each lambda preset.
inline constexpr int kChannelPresets[] = {128, 128, 128, 192, 192, 192};

// key=value config files. Lines starting with '#' are comments.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string format_key_values(const std::map<std::string, std::string>& kv);
// Applies keys to a config; unknown keys throw std::invalid_argument.
void apply_config(TrainConfig& config, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> config_to_key_values(const TrainConfig& config);

}  // namespace crossctx

#endif  // CROSSCTX_TRAINING_H_
