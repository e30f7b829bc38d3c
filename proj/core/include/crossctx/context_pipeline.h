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

// Context models that turn already-coded latents plus hyper information psi
// into per-element Gaussian parameters.
//
// kGrouped splits the N latent channels into G equal groups and codes them
// one after another; the first group is further split into its first channel
// and the rest, giving G+1 segments. Segment k sees
//   * every position of segments < k through a residual conv net (cross
//     channel context), and
//   * raster-earlier positions of segments <= k through a 5x5 mask-A conv
//     (spatial context),
// and fuses both with psi in a three-layer 1x1 conv net. Segment 0 has no
// cross-channel input.
//
// kSpatial2d is the single 5x5 mask-A conv over all channels; kMask3d slides
// one kernel, shared by every channel, over a window of the current and
// previous channels with a 3-D causal mask.

#ifndef CROSSCTX_CONTEXT_PIPELINE_H_
#define CROSSCTX_CONTEXT_PIPELINE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "crossctx/autodiff.h"
#include "crossctx/entropy_models.h"
#include "crossctx/layers.h"

namespace crossctx {

enum class ContextKind : std::uint8_t {
  kSpatial2d = 0,
  kMask3d = 1,
  kGrouped = 2,
};

ContextKind parse_context_kind(std::string_view name);
std::string_view context_kind_name(ContextKind kind);

struct Segment {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
};

class GroupPartition {
 public:
  int channels() const { return channels_; }
  int groups() const { return groups_; }
  const std::vector<Segment>& segments() const { return segments_; }
  int num_segments() const { return static_cast<int>(segments_.size()); }
  const Segment& segment(int k) const { return segments_.at(static_cast<std::size_t>(k)); }
  int segment_of(int channel) const;

 private:
  friend GroupPartition partition_channels(int n, int g);
  int channels_ = 0;
  int groups_ = 0;
  std::vector<Segment> segments_;
};

// Segment 0 = channel 0; segment 1 = rest of group 1; segments 2..G = groups.
// Requires G >= 1, N % G == 0 and N / G >= 2.
GroupPartition partition_channels(int n, int g);

// Layer widths of one segment. cross_in and cross_out are 0 for segment 0.
struct SegmentWidths {
  int cross_in = 0;    // channels of all previous segments
  int spatial_in = 0;  // channels of previous + current segments
  int cross_out = 0;
  int spatial_out = 0;
  int hyper = 0;  // psi channels, 2N
  int e1 = 0;
  int e2 = 0;
  int e3 = 0;  // 2 x segment channels: means then raw scales
};

SegmentWidths segment_widths(const GroupPartition& partition, int k);

struct ContextConfig {
  ContextKind kind = ContextKind::kGrouped;
  int channels = 192;
  int groups = 8;
  int kernel = 5;
  // Spatial2d widths; zero hidden widths are filled in by resolve().
  int spatial_features = 0;
  int spatial_hidden1 = 0;
  int spatial_hidden2 = 0;
  // Mask3d: channel window (current channel included) and widths.
  int mask3d_window = 2;
  int mask3d_features = 32;
  int mask3d_hidden = 48;
  ScaleTableConfig scale;

  // Validates and fills defaulted widths. Spatial2d hidden widths are sized
  // so the baseline's parameter count matches the grouped model (G = 8, or
  // the configured G when 8 does not divide N).
  ContextConfig resolve() const;
  std::map<std::string, std::string> to_meta() const;
  static ContextConfig from_meta(const std::map<std::string, std::string>& meta);
};

std::size_t grouped_parameter_count(int channels, int groups, int kernel = 5);

struct Position {
  int c = 0;
  int y = 0;
  int x = 0;
  friend bool operator==(const Position&, const Position&) = default;
  friend auto operator<=>(const Position&, const Position&) = default;
};

class CausalityViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Latent values visible to the decoder. Entries not yet decoded hold zero;
// with auditing on, reading one throws CausalityViolation.
class CausalContext {
 public:
  CausalContext(int channels, int height, int width, bool audit);

  const Tensor& values() const { return values_; }
  void set(int c, int y, int x, double v);
  bool decoded(int c, int y, int x) const {
    return decoded_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x] != 0;
  }
  double read(int c, int y, int x) const;
  // Throws unless every element of channels [begin, end) is decoded.
  void require_channels(int begin, int end) const;
  bool auditing() const { return audit_; }
  std::uint64_t reads() const { return reads_; }

 private:
  int c_, h_, w_;
  bool audit_;
  Tensor values_;
  std::vector<std::uint8_t> decoded_;
  mutable std::uint64_t reads_ = 0;
};

// Per-segment networks of the grouped model.
struct SegmentNets {
  Segment segment;
  SegmentWidths widths;
  std::optional<Conv2dLayer> cross_in;
  std::optional<ResidualBlock> cross_res;
  Conv2dLayer spatial;
  Conv2dLayer ep1, ep2, ep3;
};

// Working buffers of one serial coding run; one per stream.
struct StepScratch {
  Tensor cross;
  std::vector<double> feat, h1, h2, out;
};

class ContextModelBundle {
 public:
  // Registers parameters under "ctx." in `params`.
  ContextModelBundle(const ContextConfig& config, ParameterSet& params, Rng& rng);
  ContextModelBundle(ContextModelBundle&&) = default;
  ContextModelBundle(const ContextModelBundle&) = delete;
  ContextModelBundle& operator=(const ContextModelBundle&) = delete;

  ContextKind kind() const { return config_.kind; }
  const ContextConfig& config() const { return config_; }
  int channels() const { return config_.channels; }
  int hyper_channels() const { return 2 * config_.channels; }
  const GroupPartition& partition() const { return partition_; }
  const std::vector<SegmentNets>& segments() const { return segments_; }
  const ScaleTable& scale_table() const { return table_; }
  std::size_t parameter_count() const;

  struct FieldVars {
    Var mu;
    Var sigma;
  };
  // Teacher-forced parameters for every element; differentiable.
  FieldVars forward(Tape& tape, Var latents, Var psi) const;
  // Same numbers without gradient bookkeeping.
  GaussianField estimate(const Tensor& latents, const Tensor& psi) const;
  // Grouped only: parameters of segment k's channels. `latents` must hold at
  // least the channels of segments 0..k.
  GaussianField estimate_segment(int k, const Tensor& latents, const Tensor& psi) const;

  // Number of serial passes over the H x W grid (G+1, 1 or N).
  int num_passes() const;
  // Channels predicted together in pass p.
  Segment pass_channels(int pass) const;
  // Per-pass precomputation (cross-channel context).
  void begin_pass(int pass, const CausalContext& ctx, const Tensor& psi,
                  StepScratch& scratch) const;
  // One serial step: parameters of pass p's channels at (y, x), written to
  // mu/sigma (length pass_channels(p).size()). Bit-identical to estimate().
  void predict(int pass, int y, int x, const CausalContext& ctx, const Tensor& psi,
               StepScratch& scratch, std::span<double> mu, std::span<double> sigma) const;

 private:
  Var grouped_segment(Tape& tape, int k, Var latents, Var psi) const;
  Var mask3d_channel(Tape& tape, int c, Var latents, Var psi) const;
  void finish_params(std::span<const double> raw, std::span<double> mu,
                     std::span<double> sigma) const;

  ContextConfig config_;
  GroupPartition partition_;
  ScaleTable table_;
  std::vector<SegmentNets> segments_;
  // Spatial2d.
  Conv2dLayer s2d_spatial_, s2d_ep1_, s2d_ep2_, s2d_ep3_;
  // Mask3d.
  Conv2dLayer m3d_conv_, m3d_ep1_, m3d_ep2_, m3d_ep3_;
  // Tap masks of the masked conv used in each pass kind.
  std::vector<TapMask> taps_;
};

// Parameters of segment k from the channels of earlier segments and the
// current segment (only causal positions of the latter are used).
GaussianField estimate_segment_params(const ContextModelBundle& bundle, int k,
                                      const Tensor& prev_latents,
                                      const Tensor& current_latents, const Tensor& psi);

// Positions whose perturbation changes (mu, sigma) at p.
std::vector<Position> causality_probe(const ContextModelBundle& bundle, const Tensor& latents,
                                      const Tensor& psi, const Position& p);

// dependency[p][q] for every pair, computed with one perturbation per q.
class DependencyMap {
 public:
  DependencyMap(int c, int h, int w) : c_(c), h_(h), w_(w), bits_(count() * count(), 0) {}
  std::size_t count() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  std::size_t index(const Position& p) const {
    return (static_cast<std::size_t>(p.c) * h_ + p.y) * w_ + p.x;
  }
  Position position(std::size_t i) const {
    return {static_cast<int>(i / (static_cast<std::size_t>(h_) * w_)),
            static_cast<int>(i / w_ % h_), static_cast<int>(i % w_)};
  }
  bool depends(const Position& p, const Position& q) const {
    return bits_[index(p) * count() + index(q)] != 0;
  }
  void set(const Position& p, const Position& q) { bits_[index(p) * count() + index(q)] = 1; }
  std::vector<Position> dependencies(const Position& p) const;

 private:
  int c_, h_, w_;
  std::vector<std::uint8_t> bits_;
};

DependencyMap dependency_map(const ContextModelBundle& bundle, const Tensor& latents,
                             const Tensor& psi);

// Whether (mu, sigma) at p may legally depend on the latent at q.
bool legal_dependency(const ContextModelBundle& bundle, const Position& p, const Position& q);

}  // namespace crossctx

#endif  // CROSSCTX_CONTEXT_PIPELINE_H_
