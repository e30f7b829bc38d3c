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

// Measurement tools: matched-channel analysis, serial step counts, RD curves
// with Bjontegaard-delta rate, and codec timing.

#ifndef CROSSCTX_ANALYSIS_H_
#define CROSSCTX_ANALYSIS_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crossctx/codec.h"
#include "crossctx/context_pipeline.h"
#include "crossctx/latent.h"

namespace crossctx {

struct ChannelMatch {
  int channel = 0;
  int matched = 0;
  double mad_matched = 0.0;
  double mad_adjacent = 0.0;
};

// Entries for channels 1..C-1.
struct MatchReport {
  std::vector<ChannelMatch> channels;

  double non_adjacent_fraction() const;
  // "channel,matched,mad_matched,mad_adjacent"
  std::string to_csv() const;
};

// MAD(c, r) = mean |y_c - y_r| over co-located elements of every tensor in
// the batch; matched = argmin over r < c, ties to the smallest r.
MatchReport mad_match(std::span<const LatentTensor> batch);
MatchReport mad_match(const LatentTensor& latents);

// Fraction of planted (source >= 0) channels whose match is the source.
double planted_recovery(const MatchReport& report, const std::vector<int>& sources);

// Sequential masked-conv invocations needed to decode one image.
std::uint64_t serial_ops(ContextKind kind, int channels, int height, int width, int groups);

struct RDCurve {
  struct Point {
    double bpp = 0.0;
    double quality = 0.0;
  };
  std::vector<Point> points;
  std::string metric = "psnr";
  std::string kind;
  int groups = 0;
  std::vector<double> lambdas;

  // bpp strictly increasing, qualities distinct, all finite.
  void validate() const;
  // "bpp,psnr" (header names the metric).
  std::string to_csv() const;
  static RDCurve from_csv(const std::string& text);
};

// Percent rate change of `test` against `reference` at equal quality:
// log2(bpp) is interpolated over quality with Akima cubics, both are
// integrated over the shared quality range, and the mean difference d gives
// 100 * (2^d - 1). Negative means the test curve saves rate.
double bd_rate(const RDCurve& reference, const RDCurve& test);

// Akima interpolant through (x, y), x strictly increasing, n >= 2 (two
// points degrade to a line).
class AkimaSpline {
 public:
  AkimaSpline(std::vector<double> x, std::vector<double> y);
  double operator()(double v) const;
  // Exact integral over [a, b] inside the data range.
  double integral(double a, double b) const;
  double lo() const { return x_.front(); }
  double hi() const { return x_.back(); }

 private:
  std::size_t interval(double v) const;
  std::vector<double> x_, y_, t_;
};

struct ScheduleProfile {
  ContextKind kind = ContextKind::kGrouped;
  int channels = 0;
  int height = 0;
  int width = 0;
  int groups = 0;
  std::uint64_t steps = 0;
  double encode_ms = 0.0;
  double decode_ms = 0.0;
  int repetitions = 0;
  // Set when only one timed sample exists.
  bool single_sample = false;

  static std::string csv_header();  // "kind,C,H,W,G,steps,enc_ms,dec_ms"
  std::string csv_row() const;
};

// Median encode/decode wall-clock time over `repetitions` runs after one
// untimed warm-up run.
ScheduleProfile profile_codec(const ContextModelBundle& bundle, const LatentTensor& latents,
                              const Tensor& psi, int repetitions);

}  // namespace crossctx

#endif  // CROSSCTX_ANALYSIS_H_
