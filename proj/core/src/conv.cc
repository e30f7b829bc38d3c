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

#include "crossctx/conv.h"

#include <algorithm>

namespace crossctx {

MaskKind parse_mask_kind(std::string_view name) {
  if (name == "none") return MaskKind::kNone;
  if (name == "causal-A" || name == "A") return MaskKind::kCausalA;
  if (name == "causal-B" || name == "B") return MaskKind::kCausalB;
  if (name == "causal-3d" || name == "3d") return MaskKind::kCausal3d;
  throw std::invalid_argument("unknown mask kind '" + std::string(name) + "'");
}

std::string_view mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::kNone:
      return "none";
    case MaskKind::kCausalA:
      return "causal-A";
    case MaskKind::kCausalB:
      return "causal-B";
    case MaskKind::kCausal3d:
      return "causal-3d";
  }
  throw std::invalid_argument("unknown mask kind");
}

void ConvSpec::validate() const {
  if (in_ch <= 0 || out_ch <= 0 || kh <= 0 || kw <= 0 || stride <= 0 || pad_h < 0 ||
      pad_w < 0) {
    throw ShapeError("invalid conv spec");
  }
}

TapMask::TapMask(const ConvSpec& spec)
    : kh_(spec.kh),
      kw_(spec.kw),
      flags_(static_cast<std::size_t>(spec.in_ch) * spec.kh * spec.kw, 1) {
  const int center = (spec.kh / 2) * spec.kw + spec.kw / 2;
  const int current = spec.in_ch / 2;
  for (int i = 0; i < spec.in_ch; ++i) {
    for (int ky = 0; ky < spec.kh; ++ky) {
      for (int kx = 0; kx < spec.kw; ++kx) {
        const int r = ky * spec.kw + kx;
        bool on = true;
        switch (spec.mask) {
          case MaskKind::kNone:
            break;
          case MaskKind::kCausalA:
            on = r < center;
            break;
          case MaskKind::kCausalB:
            on = r <= center;
            break;
          case MaskKind::kCausal3d:
            on = i < current || (i == current && r < center);
            break;
        }
        flags_[(static_cast<std::size_t>(i) * kh_ + ky) * kw_ + kx] = on ? 1 : 0;
      }
    }
  }
}

int TapMask::enabled_count(int i) const {
  int n = 0;
  for (int ky = 0; ky < kh_; ++ky) {
    for (int kx = 0; kx < kw_; ++kx) n += enabled(i, ky, kx) ? 1 : 0;
  }
  return n;
}

Tensor apply_mask(const Tensor& weights, MaskKind mask) {
  if (weights.rank() != 4) throw ShapeError("apply_mask expects a 4-D kernel");
  ConvSpec spec{weights.dim(1), weights.dim(0), weights.dim(2), weights.dim(3), 1, 0, 0, mask};
  const TapMask taps(spec);
  Tensor out = weights;
  std::size_t idx = 0;
  for (int o = 0; o < spec.out_ch; ++o) {
    for (int i = 0; i < spec.in_ch; ++i) {
      for (int ky = 0; ky < spec.kh; ++ky) {
        for (int kx = 0; kx < spec.kw; ++kx, ++idx) {
          if (!taps.enabled(i, ky, kx)) out[idx] = 0.0;
        }
      }
    }
  }
  return out;
}

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& weights, const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 3 || input.channels() != spec.in_ch) {
    throw ShapeError("conv2d input " + input.shape_string() + " does not have " +
                     std::to_string(spec.in_ch) + " channels");
  }
  if (weights.dims() != spec.weight_dims()) {
    throw ShapeError("conv2d weights " + weights.shape_string() + " do not match spec");
  }
  if (spec.out_height(input.height()) <= 0 || spec.out_width(input.width()) <= 0) {
    throw ShapeError("conv2d output would be empty for input " + input.shape_string());
  }
}

// Output column range [lo, hi) whose input column ox*s + kx - pad is valid.
inline void valid_range(int k, int pad, int stride, int in, int out, int* lo, int* hi) {
  int first = pad - k;
  first = first <= 0 ? 0 : (first + stride - 1) / stride;
  const int last_num = in - 1 + pad - k;
  const int last = last_num < 0 ? -1 : last_num / stride;
  *lo = std::max(0, first);
  *hi = std::min(out, last + 1);
}

inline double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      const ConvSpec& spec) {
  check_conv_shapes(input, weights, spec);
  if (bias.size() != static_cast<std::size_t>(spec.out_ch)) {
    throw ShapeError("conv2d bias length mismatch");
  }
  ensure_finite(input, "conv2d input");
  const int h = input.height(), w = input.width();
  const int oh = spec.out_height(h), ow = spec.out_width(w);
  const int s = spec.stride;
  const TapMask taps(spec);
  Tensor out({spec.out_ch, oh, ow});
  const double* wp = weights.data();
  for (int o = 0; o < spec.out_ch; ++o) {
    double* op = out.data() + static_cast<std::size_t>(o) * oh * ow;
    std::fill(op, op + static_cast<std::size_t>(oh) * ow, bias[static_cast<std::size_t>(o)]);
    for (int i = 0; i < spec.in_ch; ++i) {
      const double* ip = input.data() + static_cast<std::size_t>(i) * h * w;
      for (int ky = 0; ky < spec.kh; ++ky) {
        for (int kx = 0; kx < spec.kw; ++kx) {
          if (!taps.enabled(i, ky, kx)) continue;
          const double wv =
              wp[((static_cast<std::size_t>(o) * spec.in_ch + i) * spec.kh + ky) * spec.kw + kx];
          int x0, x1;
          valid_range(kx, spec.pad_w, s, w, ow, &x0, &x1);
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s + ky - spec.pad_h;
            if (iy < 0 || iy >= h) continue;
            double* orow = op + static_cast<std::size_t>(oy) * ow;
            const double* irow = ip + static_cast<std::size_t>(iy) * w + kx - spec.pad_w;
            if (s == 1) {
              for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * irow[ox];
            } else {
              for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * irow[ox * s];
            }
          }
        }
      }
    }
  }
  ensure_finite(out, "conv2d output");
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                     const ConvSpec& spec, Tensor* grad_input, Tensor* grad_weights,
                     Tensor* grad_bias) {
  check_conv_shapes(input, weights, spec);
  const int h = input.height(), w = input.width();
  const int oh = spec.out_height(h), ow = spec.out_width(w);
  if (grad_out.dims() != std::vector<int>{spec.out_ch, oh, ow}) {
    throw ShapeError("conv2d grad_out shape mismatch");
  }
  const int s = spec.stride;
  const TapMask taps(spec);
  const double* wp = weights.data();
  for (int o = 0; o < spec.out_ch; ++o) {
    const double* gp = grad_out.data() + static_cast<std::size_t>(o) * oh * ow;
    if (grad_bias != nullptr) {
      double acc = 0.0;
      for (std::size_t j = 0; j < static_cast<std::size_t>(oh) * ow; ++j) acc += gp[j];
      (*grad_bias)[static_cast<std::size_t>(o)] += acc;
    }
    for (int i = 0; i < spec.in_ch; ++i) {
      const double* ip = input.data() + static_cast<std::size_t>(i) * h * w;
      double* gip =
          grad_input ? grad_input->data() + static_cast<std::size_t>(i) * h * w : nullptr;
      for (int ky = 0; ky < spec.kh; ++ky) {
        for (int kx = 0; kx < spec.kw; ++kx) {
          if (!taps.enabled(i, ky, kx)) continue;
          const std::size_t widx =
              ((static_cast<std::size_t>(o) * spec.in_ch + i) * spec.kh + ky) * spec.kw + kx;
          const double wv = wp[widx];
          int x0, x1;
          valid_range(kx, spec.pad_w, s, w, ow, &x0, &x1);
          if (x1 <= x0) continue;
          double gw = 0.0;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s + ky - spec.pad_h;
            if (iy < 0 || iy >= h) continue;
            const double* grow = gp + static_cast<std::size_t>(oy) * ow;
            const std::ptrdiff_t off =
                static_cast<std::ptrdiff_t>(iy) * w + kx - spec.pad_w;
            if (s == 1) {
              if (grad_weights) gw += dot(grow + x0, ip + off + x0, x1 - x0);
              if (gip) {
                double* girow = gip + off;
                for (int ox = x0; ox < x1; ++ox) girow[ox] += wv * grow[ox];
              }
            } else {
              for (int ox = x0; ox < x1; ++ox) {
                if (grad_weights) gw += grow[ox] * ip[off + ox * s];
                if (gip) gip[off + ox * s] += wv * grow[ox];
              }
            }
          }
          if (grad_weights) (*grad_weights)[widx] += gw;
        }
      }
    }
  }
}

void pointwise_at(std::span<const double> in, const Tensor& weights, const Tensor& bias,
                  std::span<double> out) {
  const std::size_t in_ch = in.size();
  const double* w = weights.data();
  for (std::size_t o = 0; o < out.size(); ++o) {
    double acc = bias[o];
    const double* wr = w + o * in_ch;
    for (std::size_t i = 0; i < in_ch; ++i) acc += wr[i] * in[i];
    out[o] = acc;
  }
}

}  // namespace crossctx
