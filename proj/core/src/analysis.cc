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

#include "crossctx/analysis.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace crossctx {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double MatchReport::non_adjacent_fraction() const {
  if (channels.empty()) return 0.0;
  std::size_t far = 0;
  for (const ChannelMatch& m : channels) far += m.matched != m.channel - 1 ? 1 : 0;
  return static_cast<double>(far) / static_cast<double>(channels.size());
}

std::string MatchReport::to_csv() const {
  std::string out = "channel,matched,mad_matched,mad_adjacent\n";
  for (const ChannelMatch& m : channels) {
    out += std::to_string(m.channel) + "," + std::to_string(m.matched) + "," +
           fmt(m.mad_matched) + "," + fmt(m.mad_adjacent) + "\n";
  }
  return out;
}

MatchReport mad_match(std::span<const LatentTensor> batch) {
  if (batch.empty()) throw std::invalid_argument("mad_match needs at least one tensor");
  const int c = batch[0].channels();
  if (c < 2) throw std::invalid_argument("mad_match needs at least two channels");
  for (const LatentTensor& t : batch) {
    if (t.channels() != c || t.height() != batch[0].height() || t.width() != batch[0].width()) {
      throw ShapeError("mad_match batch items differ in shape");
    }
  }
  std::size_t count = 0;
  for (const LatentTensor& t : batch) count += t.plane();
  auto mad = [&](int a, int b) {
    std::int64_t total = 0;
    for (const LatentTensor& t : batch) {
      const std::size_t plane = t.plane();
      const std::int32_t* pa = t.values().data() + static_cast<std::size_t>(a) * plane;
      const std::int32_t* pb = t.values().data() + static_cast<std::size_t>(b) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        total += std::llabs(static_cast<std::int64_t>(pa[i]) - pb[i]);
      }
    }
    return static_cast<double>(total) / static_cast<double>(count);
  };
  MatchReport report;
  for (int ch = 1; ch < c; ++ch) {
    ChannelMatch m;
    m.channel = ch;
    m.mad_matched = mad(ch, 0);
    for (int r = 1; r < ch; ++r) {
      const double d = mad(ch, r);
      if (d < m.mad_matched) {
        m.mad_matched = d;
        m.matched = r;
      }
    }
    m.mad_adjacent = mad(ch, ch - 1);
    report.channels.push_back(m);
  }
  return report;
}

MatchReport mad_match(const LatentTensor& latents) {
  return mad_match(std::span<const LatentTensor>(&latents, 1));
}

double planted_recovery(const MatchReport& report, const std::vector<int>& sources) {
  std::size_t planted = 0;
  std::size_t hit = 0;
  for (const ChannelMatch& m : report.channels) {
    const auto c = static_cast<std::size_t>(m.channel);
    if (c >= sources.size() || sources[c] < 0) continue;
    ++planted;
    hit += m.matched == sources[c] ? 1 : 0;
  }
  return planted == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(planted);
}

std::uint64_t serial_ops(ContextKind kind, int channels, int height, int width, int groups) {
  if (channels < 1 || height < 1 || width < 1) throw std::invalid_argument("serial_ops dims");
  const auto hw = static_cast<std::uint64_t>(height) * static_cast<std::uint64_t>(width);
  switch (kind) {
    case ContextKind::kSpatial2d: return hw;
    case ContextKind::kMask3d: return static_cast<std::uint64_t>(channels) * hw;
    case ContextKind::kGrouped:
      partition_channels(channels, groups);
      return static_cast<std::uint64_t>(groups + 1) * hw;
  }
  return 0;
}

void RDCurve::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].bpp) || !std::isfinite(points[i].quality) ||
        !(points[i].bpp > 0.0)) {
      throw std::invalid_argument("RD points need positive finite bpp and finite quality");
    }
    if (i > 0 && !(points[i].bpp > points[i - 1].bpp)) {
      throw std::invalid_argument("RD curve bpp must be strictly increasing");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (points[j].quality == points[i].quality) {
        throw std::invalid_argument("RD curve qualities must be distinct");
      }
    }
  }
}

std::string RDCurve::to_csv() const {
  std::string out = "bpp," + metric + "\n";
  for (const Point& p : points) out += fmt(p.bpp) + "," + fmt(p.quality) + "\n";
  return out;
}

RDCurve RDCurve::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  RDCurve curve;
  if (!std::getline(in, line) || line.rfind("bpp,", 0) != 0) {
    throw std::invalid_argument("RD CSV must start with a 'bpp,<metric>' header");
  }
  curve.metric = line.substr(4);
  while (!curve.metric.empty() && (curve.metric.back() == '\r' || curve.metric.back() == ' ')) {
    curve.metric.pop_back();
  }
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("bad RD CSV row '" + line + "'");
    curve.points.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  curve.validate();
  return curve;
}

AkimaSpline::AkimaSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw std::invalid_argument("Akima spline needs >= 2 points");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("Akima abscissae must increase");
  }
  // Secant slopes with two extrapolated slopes at each end: m[k + 2] is the
  // slope of interval k, k = -2 .. n.
  std::vector<double> m(n + 3);
  for (std::size_t k = 0; k + 1 < n; ++k) m[k + 2] = (y_[k + 1] - y_[k]) / (x_[k + 1] - x_[k]);
  if (n == 2) {
    m[0] = m[1] = m[3] = m[4] = m[2];
  } else {
    m[1] = 2.0 * m[2] - m[3];
    m[0] = 2.0 * m[1] - m[2];
    m[n + 1] = 2.0 * m[n] - m[n - 1];
    m[n + 2] = 2.0 * m[n + 1] - m[n];
  }
  t_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w1 = std::fabs(m[i + 3] - m[i + 2]);
    const double w2 = std::fabs(m[i + 1] - m[i]);
    t_[i] = w1 + w2 > 0.0 ? (w1 * m[i + 1] + w2 * m[i + 2]) / (w1 + w2)
                          : 0.5 * (m[i + 1] + m[i + 2]);
  }
}

std::size_t AkimaSpline::interval(double v) const {
  auto it = std::upper_bound(x_.begin(), x_.end(), v);
  std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
  return std::min(i, x_.size() - 2);
}

double AkimaSpline::operator()(double v) const {
  const std::size_t i = interval(v);
  const double h = x_[i + 1] - x_[i];
  const double m = (y_[i + 1] - y_[i]) / h;
  const double c2 = (3.0 * m - 2.0 * t_[i] - t_[i + 1]) / h;
  const double c3 = (t_[i] + t_[i + 1] - 2.0 * m) / (h * h);
  const double s = v - x_[i];
  return y_[i] + s * (t_[i] + s * (c2 + s * c3));
}

double AkimaSpline::integral(double a, double b) const {
  if (a > b) return -integral(b, a);
  if (a < lo() - 1e-12 || b > hi() + 1e-12) {
    throw std::invalid_argument("Akima integral outside the data range");
  }
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < x_.size(); ++i) {
    const double lo_i = std::max(a, x_[i]);
    const double hi_i = std::min(b, x_[i + 1]);
    if (!(hi_i > lo_i)) continue;
    const double h = x_[i + 1] - x_[i];
    const double m = (y_[i + 1] - y_[i]) / h;
    const double c2 = (3.0 * m - 2.0 * t_[i] - t_[i + 1]) / h;
    const double c3 = (t_[i] + t_[i + 1] - 2.0 * m) / (h * h);
    auto antideriv = [&](double s) {
      return s * (y_[i] + s * (t_[i] / 2.0 + s * (c2 / 3.0 + s * c3 / 4.0)));
    };
    total += antideriv(hi_i - x_[i]) - antideriv(lo_i - x_[i]);
  }
  return total;
}

double bd_rate(const RDCurve& reference, const RDCurve& test) {
  reference.validate();
  test.validate();
  if (reference.points.size() < 4 || test.points.size() < 4) {
    throw std::invalid_argument("BD-rate needs at least 4 points per curve");
  }
  auto spline = [](const RDCurve& c) {
    std::vector<RDCurve::Point> p = c.points;
    std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.quality < b.quality; });
    std::vector<double> q;
    std::vector<double> r;
    for (const auto& pt : p) {
      q.push_back(pt.quality);
      r.push_back(std::log2(pt.bpp));
    }
    return AkimaSpline(std::move(q), std::move(r));
  };
  const AkimaSpline ref = spline(reference);
  const AkimaSpline tst = spline(test);
  const double lo = std::max(ref.lo(), tst.lo());
  const double hi = std::min(ref.hi(), tst.hi());
  if (!(hi > lo)) throw std::invalid_argument("RD curves have no overlapping quality range");
  const double diff = (tst.integral(lo, hi) - ref.integral(lo, hi)) / (hi - lo);
  return 100.0 * (std::exp2(diff) - 1.0);
}

std::string ScheduleProfile::csv_header() { return "kind,C,H,W,G,steps,enc_ms,dec_ms"; }

std::string ScheduleProfile::csv_row() const {
  return std::string(context_kind_name(kind)) + "," + std::to_string(channels) + "," +
         std::to_string(height) + "," + std::to_string(width) + "," + std::to_string(groups) +
         "," + std::to_string(steps) + "," + fmt(encode_ms) + "," + fmt(decode_ms);
}

ScheduleProfile profile_codec(const ContextModelBundle& bundle, const LatentTensor& latents,
                              const Tensor& psi, int repetitions) {
  if (repetitions < 1) throw std::invalid_argument("profile needs at least one repetition");
  using Clock = std::chrono::steady_clock;
  ScheduleProfile p;
  p.kind = bundle.kind();
  p.channels = latents.channels();
  p.height = latents.height();
  p.width = latents.width();
  p.groups = bundle.config().groups;
  p.repetitions = repetitions;
  p.single_sample = repetitions == 1;
  CodingTrace trace;
  const std::vector<std::uint8_t> warm = encode_latents(latents, bundle, psi);
  decode_latents(warm, bundle, psi, latents.height(), latents.width(), &trace);
  p.steps = trace.serial_steps;
  std::vector<double> enc;
  std::vector<double> dec;
  for (int r = 0; r < repetitions; ++r) {
    const auto t0 = Clock::now();
    const std::vector<std::uint8_t> bytes = encode_latents(latents, bundle, psi);
    const auto t1 = Clock::now();
    const LatentTensor back = decode_latents(bytes, bundle, psi, latents.height(), latents.width());
    const auto t2 = Clock::now();
    if (!(back == latents)) throw std::logic_error("profile round trip failed");
    enc.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    dec.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
  }
  p.encode_ms = median(enc);
  p.decode_ms = median(dec);
  return p;
}

}  // namespace crossctx
