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

// Direct 2D convolution kernels with causal masks.
//
// Every output element is accumulated as bias + sum over (in channel, ky, kx)
// in raster order, skipping masked and out-of-bounds taps. The full-map kernel
// and the single-position kernel share that order, so a value computed for one
// position while decoding is bit-identical to the same value taken from a full
// forward pass.

#ifndef CROSSCTX_CONV_H_
#define CROSSCTX_CONV_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crossctx/tensor.h"

namespace crossctx {

enum class MaskKind : std::uint8_t {
  kNone = 0,
  // Center tap and everything after it in raster order are zero.
  kCausalA = 1,
  // Only taps strictly after the center are zero.
  kCausalB = 2,
  // Input channel in_ch/2 is the current channel and gets mask A; earlier
  // channels keep all taps and later channels are zeroed.
  kCausal3d = 3,
};

MaskKind parse_mask_kind(std::string_view name);
std::string_view mask_kind_name(MaskKind kind);

struct ConvSpec {
  int in_ch = 1;
  int out_ch = 1;
  int kh = 1;
  int kw = 1;
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  MaskKind mask = MaskKind::kNone;

  // Same-size convolution with odd kernel.
  static ConvSpec same(int in_ch, int out_ch, int k, MaskKind mask = MaskKind::kNone) {
    return {in_ch, out_ch, k, k, 1, k / 2, k / 2, mask};
  }

  int out_height(int h) const { return (h + 2 * pad_h - kh) / stride + 1; }
  int out_width(int w) const { return (w + 2 * pad_w - kw) / stride + 1; }
  std::vector<int> weight_dims() const { return {out_ch, in_ch, kh, kw}; }
  void validate() const;
};

// Per (in channel, ky, kx) flags: 1 when the tap participates.
class TapMask {
 public:
  explicit TapMask(const ConvSpec& spec);
  bool enabled(int i, int ky, int kx) const {
    return flags_[(static_cast<std::size_t>(i) * kh_ + ky) * kw_ + kx] != 0;
  }
  int enabled_count(int i) const;

 private:
  int kh_;
  int kw_;
  std::vector<std::uint8_t> flags_;
};

// Returns a copy of a 4-D kernel with masked taps set to exactly zero.
Tensor apply_mask(const Tensor& weights, MaskKind mask);

// out = conv(input, weights) + bias. Masked taps are skipped, so they
// contribute nothing regardless of the stored weight value.
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec);

// Accumulates gradients (any pointer may be null).
void conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                     const ConvSpec& spec, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias);

// All output channels at one output position. `read(i, y, x)` supplies input
// values; it is only called for in-bounds, unmasked taps.
template <typename Reader>
void conv2d_at(const Reader& read, int in_h, int in_w, const Tensor& weights,
               const Tensor& bias, const ConvSpec& spec, const TapMask& taps, int oy,
               int ox, std::span<double> out) {
  const double* w = weights.data();
  for (int o = 0; o < spec.out_ch; ++o) {
    double acc = bias[static_cast<std::size_t>(o)];
    for (int i = 0; i < spec.in_ch; ++i) {
      for (int ky = 0; ky < spec.kh; ++ky) {
        const int iy = oy * spec.stride + ky - spec.pad_h;
        if (iy < 0 || iy >= in_h) continue;
        for (int kx = 0; kx < spec.kw; ++kx) {
          if (!taps.enabled(i, ky, kx)) continue;
          const int ix = ox * spec.stride + kx - spec.pad_w;
          if (ix < 0 || ix >= in_w) continue;
          acc += w[((static_cast<std::size_t>(o) * spec.in_ch + i) * spec.kh + ky) * spec.kw +
                   kx] *
                 read(i, iy, ix);
        }
      }
    }
    out[static_cast<std::size_t>(o)] = acc;
  }
}

// 1x1 convolution applied to a single feature vector, same summation order as
// conv2d_forward with a 1x1 kernel.
void pointwise_at(std::span<const double> in, const Tensor& weights, const Tensor& bias,
                  std::span<double> out);

}  // namespace crossctx

#endif  // CROSSCTX_CONV_H_
