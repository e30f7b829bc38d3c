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

// Reference implementations used as test oracles. They are written
// independently of the library code and favour clarity over speed.

#ifndef CROSSCTX_TESTS_ORACLES_H_
#define CROSSCTX_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "crossctx/conv.h"
#include "crossctx/rng.h"
#include "crossctx/tensor.h"

namespace oracle {

using crossctx::ConvSpec;
using crossctx::MaskKind;
using crossctx::Tensor;

inline Tensor random_tensor(std::vector<int> dims, std::uint64_t seed, double scale = 1.0) {
  crossctx::Rng rng(seed);
  Tensor t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.uniform(-1.0, 1.0);
  return t;
}

// Whether tap (ky, kx) of input channel i is used under `mask`.
inline bool tap_used(MaskKind mask, int in_ch, int i, int kh, int kw, int ky, int kx) {
  const int cy = kh / 2;
  const int cx = kw / 2;
  const bool before = ky < cy || (ky == cy && kx < cx);
  const bool center = ky == cy && kx == cx;
  switch (mask) {
    case MaskKind::kNone:
      return true;
    case MaskKind::kCausalA:
      return before;
    case MaskKind::kCausalB:
      return before || center;
    case MaskKind::kCausal3d:
      if (i < in_ch / 2) return true;
      if (i == in_ch / 2) return before;
      return false;
  }
  return false;
}

// Textbook direct convolution (zero padding), loops ordered output-first.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& s) {
  const int oh = (x.height() + 2 * s.pad_h - s.kh) / s.stride + 1;
  const int ow = (x.width() + 2 * s.pad_w - s.kw) / s.stride + 1;
  Tensor out({s.out_ch, oh, ow});
  for (int o = 0; o < s.out_ch; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        long double acc = b[static_cast<std::size_t>(o)];
        for (int ky = 0; ky < s.kh; ++ky) {
          for (int kx = 0; kx < s.kw; ++kx) {
            const int iy = y * s.stride - s.pad_h + ky;
            const int ix = xx * s.stride - s.pad_w + kx;
            if (iy < 0 || ix < 0 || iy >= x.height() || ix >= x.width()) continue;
            for (int i = 0; i < s.in_ch; ++i) {
              if (!tap_used(s.mask, s.in_ch, i, s.kh, s.kw, ky, kx)) continue;
              const std::size_t wi =
                  ((static_cast<std::size_t>(o) * s.in_ch + i) * s.kh + ky) * s.kw + kx;
              acc += static_cast<long double>(w[wi]) * x.at(i, iy, ix);
            }
          }
        }
        out.at(o, y, xx) = static_cast<double>(acc);
      }
    }
  }
  return out;
}

// Central difference of f with respect to *x.
inline double central_difference(const std::function<double()>& f, double* x, double h) {
  const double keep = *x;
  *x = keep + h;
  const double up = f();
  *x = keep - h;
  const double down = f();
  *x = keep;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double std_normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Akima (1970) interpolation with the usual two-point end extrapolation of
// the secant slopes; evaluated by Hermite cubic on each interval.
class Akima {
 public:
  Akima(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    std::vector<double> m(n + 3);
    for (std::size_t i = 0; i + 1 < n; ++i) m[i + 2] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    m[1] = 2.0 * m[2] - m[3];
    m[0] = 2.0 * m[1] - m[2];
    m[n + 1] = 2.0 * m[n] - m[n - 1];
    m[n + 2] = 2.0 * m[n + 1] - m[n];
    d_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double w1 = std::abs(m[i + 3] - m[i + 2]);
      const double w2 = std::abs(m[i + 1] - m[i]);
      d_[i] = (w1 + w2 == 0.0) ? 0.5 * (m[i + 1] + m[i + 2])
                               : (w1 * m[i + 1] + w2 * m[i + 2]) / (w1 + w2);
    }
  }
  double operator()(double v) const {
    std::size_t i = 0;
    while (i + 2 < x_.size() && v > x_[i + 1]) ++i;
    const double h = x_[i + 1] - x_[i];
    const double t = (v - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * d_[i] +
           (-2 * t3 + 3 * t2) * y_[i + 1] + (t3 - t2) * h * d_[i + 1];
  }

 private:
  std::vector<double> x_, y_, d_;
};

// Trapezoid integral of f over [a, b] with n panels.
inline double trapezoid(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

// Bjontegaard rate difference in percent: log2(bpp) over quality with the
// oracle Akima interpolant, integrated by a dense trapezoid rule.
inline double bd_rate(std::vector<std::pair<double, double>> ref,
                      std::vector<std::pair<double, double>> test, int panels = 200000) {
  auto curve = [](std::vector<std::pair<double, double>> pts) {
    std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.second < b.second; });
    std::vector<double> q, r;
    for (auto& [bpp, quality] : pts) {
      q.push_back(quality);
      r.push_back(std::log2(bpp));
    }
    return std::make_pair(Akima(q, r), std::make_pair(q.front(), q.back()));
  };
  const auto [ra, rr] = curve(std::move(ref));
  const auto [ta, tr] = curve(std::move(test));
  const double lo = std::max(rr.first, tr.first);
  const double hi = std::min(rr.second, tr.second);
  const double d = (trapezoid(ta, lo, hi, panels) - trapezoid(ra, lo, hi, panels)) / (hi - lo);
  return 100.0 * (std::exp2(d) - 1.0);
}

}  // namespace oracle

#endif  // CROSSCTX_TESTS_ORACLES_H_
