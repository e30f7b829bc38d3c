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

#include "crossctx/autodiff.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crossctx/probability.h"

namespace crossctx {

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, Tensor init) {
  if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->grad = Tensor(init.dims());
  p->value = std::move(init);
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), raw);
  return *raw;
}

Parameter* ParameterSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::size_t ParameterSet::element_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p->name.compare(0, prefix.size(), prefix) == 0) n += p->value.size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::append(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) {
  ensure_finite(value, "tape constant");
  Node n;
  n.value = std::move(value);
  return append(std::move(n));
}

Var Tape::input(Tensor value, bool requires_grad) {
  ensure_finite(value, "tape input");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && recording_;
  return append(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = recording_;
  return append(std::move(n));
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(fn));
}

Var Tape::push(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (const Var& p : parents) {
      if (p.tape != this) throw std::logic_error("mixing vars from different tapes");
      n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p.id)].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return append(std::move(n));
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (!backward_done_ || !n.requires_grad) throw std::logic_error("no gradient recorded");
  return n.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.dims());
  return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.requires_grad) return;
  Tensor& dst = grad_buffer(v);
  ensure_same_shape(dst, g, "gradient accumulation");
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Tape::backward(Var loss) {
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  if (backward_done_) {
    throw std::logic_error("backward called twice on the same tape");
  }
  Node& top = nodes_.at(static_cast<std::size_t>(loss.id));
  if (top.value.size() != 1) throw ShapeError("backward expects a scalar loss");
  backward_done_ = true;
  if (!top.requires_grad) return;
  grad_buffer(loss)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, n.grad);
    }
  }
}

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

double softplus(double x) {
  // log(1 + e^x) without overflow.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// ---------------------------------------------------------------------------
// Ops

namespace ad {
namespace {

Tensor checked(Tensor t, const char* op) {
  ensure_finite(t, op);
  return t;
}

Var scalar_result(Tape& tape, double v, std::initializer_list<Var> parents,
                  Tape::BackwardFn fn) {
  Tensor out({1}, v);
  return tape.push(checked(std::move(out), "scalar op"), parents, std::move(fn));
}

}  // namespace

Var conv2d(Var x, Var weights, Var bias, const ConvSpec& spec) {
  Tape& tape = *x.tape;
  Tensor out = conv2d_forward(x.value(), weights.value(), bias.value(), spec);
  return tape.push(std::move(out), {x, weights, bias},
                   [x, weights, bias, spec](Tape& t, const Tensor& g) {
                     Tensor* gx = t.requires_grad(x) ? &t.grad_buffer(x) : nullptr;
                     Tensor* gw = t.requires_grad(weights) ? &t.grad_buffer(weights) : nullptr;
                     Tensor* gb = t.requires_grad(bias) ? &t.grad_buffer(bias) : nullptr;
                     conv2d_backward(x.value(), weights.value(), g, spec, gx, gw, gb);
                   });
}

Var leaky_relu(Var x, double slope) {
  const Tensor& in = x.value();
  Tensor out(in.dims());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = crossctx::leaky_relu(in[i], slope);
  return x.tape->push(checked(std::move(out), "leaky_relu"), {x},
                      [x, slope](Tape& t, const Tensor& g) {
                        const Tensor& in = x.value();
                        Tensor& gx = t.grad_buffer(x);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          gx[i] += in[i] >= 0.0 ? g[i] : slope * g[i];
                        }
                      });
}

Var add(Var a, Var b) {
  ensure_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->push(checked(std::move(out), "add"), {a, b},
                      [a, b](Tape& t, const Tensor& g) {
                        t.accumulate(a, g);
                        t.accumulate(b, g);
                      });
}

Var mul(Var a, Var b) {
  ensure_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->push(checked(std::move(out), "mul"), {a, b},
                      [a, b](Tape& t, const Tensor& g) {
                        const Tensor& av = a.value();
                        const Tensor& bv = b.value();
                        if (t.requires_grad(a)) {
                          Tensor& ga = t.grad_buffer(a);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                        }
                        if (t.requires_grad(b)) {
                          Tensor& gb = t.grad_buffer(b);
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                        }
                      });
}

Var scale(Var x, double k) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= k;
  return x.tape->push(checked(std::move(out), "scale"), {x},
                      [x, k](Tape& t, const Tensor& g) {
                        Tensor& gx = t.grad_buffer(x);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += k * g[i];
                      });
}

Var softplus(Var x) {
  const Tensor& in = x.value();
  Tensor out(in.dims());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = crossctx::softplus(in[i]);
  return x.tape->push(checked(std::move(out), "softplus"), {x},
                      [x](Tape& t, const Tensor& g) {
                        const Tensor& in = x.value();
                        Tensor& gx = t.grad_buffer(x);
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid(in[i]);
                      });
}

Var clamp(Var x, double lo, double hi) {
  const Tensor& in = x.value();
  Tensor out(in.dims());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::clamp(in[i], lo, hi);
  return x.tape->push(checked(std::move(out), "clamp"), {x},
                      [x, lo, hi](Tape& t, const Tensor& g) {
                        const Tensor& in = x.value();
                        Tensor& gx = t.grad_buffer(x);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                          if (in[i] > lo && in[i] < hi) gx[i] += g[i];
                        }
                      });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return scalar_result(*x.tape, acc, {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels of nothing");
  std::vector<const Tensor*> values;
  values.reserve(parts.size());
  for (const Var& v : parts) values.push_back(&v.value());
  Tensor out = Tensor::concat_channels(values);
  std::vector<Var> captured(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(out), parts, [captured](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& v : captured) {
      const std::size_t n = v.value().size();
      if (t.requires_grad(v)) {
        Tensor& gv = t.grad_buffer(v);
        for (std::size_t i = 0; i < n; ++i) gv[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

Var slice_channels(Var x, int begin, int end) {
  Tensor out = x.value().slice_channels(begin, end);
  return x.tape->push(std::move(out), {x}, [x, begin](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const std::size_t offset = static_cast<std::size_t>(begin) * x.value().plane();
    for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
  });
}

Var upsample_nearest(Var x, int out_h, int out_w) {
  const Tensor& in = x.value();
  if (in.rank() != 3 || out_h <= 0 || out_w <= 0) throw ShapeError("upsample_nearest");
  const int c = in.channels(), h = in.height(), w = in.width();
  Tensor out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < out_h; ++y) {
      const int sy = static_cast<int>(static_cast<long>(y) * h / out_h);
      for (int xx = 0; xx < out_w; ++xx) {
        out.at(ch, y, xx) = in.at(ch, sy, static_cast<int>(static_cast<long>(xx) * w / out_w));
      }
    }
  }
  return x.tape->push(std::move(out), {x}, [x, out_h, out_w](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    const int c = gx.channels(), h = gx.height(), w = gx.width();
    for (int ch = 0; ch < c; ++ch) {
      for (int y = 0; y < out_h; ++y) {
        const int sy = static_cast<int>(static_cast<long>(y) * h / out_h);
        for (int xx = 0; xx < out_w; ++xx) {
          gx.at(ch, sy, static_cast<int>(static_cast<long>(xx) * w / out_w)) += g.at(ch, y, xx);
        }
      }
    }
  });
}

Var mse(Var a, Var b) {
  ensure_same_shape(a.value(), b.value(), "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  const double n = static_cast<double>(av.size());
  return scalar_result(*a.tape, acc / n, {a, b}, [a, b, n](Tape& t, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const double k = 2.0 * g[0] / n;
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += k * (av[i] - bv[i]);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= k * (av[i] - bv[i]);
    }
  });
}

Var gaussian_rate_bits(Var y, Var mu, Var sigma) {
  ensure_same_shape(y.value(), mu.value(), "gaussian_rate_bits");
  ensure_same_shape(y.value(), sigma.value(), "gaussian_rate_bits");
  const Tensor& yv = y.value();
  const Tensor& mv = mu.value();
  const Tensor& sv = sigma.value();
  double bits = 0.0;
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double p = gaussian_bin(yv[i] - mv[i], sv[i]).p;
    bits -= std::log2(std::max(p, kLikelihoodFloor));
  }
  return scalar_result(*y.tape, bits, {y, mu, sigma}, [y, mu, sigma](Tape& t, const Tensor& g) {
    const Tensor& yv = y.value();
    const Tensor& mv = mu.value();
    const Tensor& sv = sigma.value();
    Tensor* gy = t.requires_grad(y) ? &t.grad_buffer(y) : nullptr;
    Tensor* gm = t.requires_grad(mu) ? &t.grad_buffer(mu) : nullptr;
    Tensor* gs = t.requires_grad(sigma) ? &t.grad_buffer(sigma) : nullptr;
    const double k = -g[0] / std::log(2.0);
    for (std::size_t i = 0; i < yv.size(); ++i) {
      const double off = yv[i] - mv[i];
      const BinMass b = gaussian_bin(off, sv[i]);
      if (b.p < kLikelihoodFloor) continue;
      const double dv = k * b.d_offset / b.p;
      const double sgn = off > 0.0 ? 1.0 : (off < 0.0 ? -1.0 : 0.0);
      if (gy) (*gy)[i] += dv * sgn;
      if (gm) (*gm)[i] -= dv * sgn;
      if (gs) (*gs)[i] += k * b.d_scale / b.p;
    }
  });
}

Var logistic_rate_bits(Var z, Var loc, Var log_scale) {
  const Tensor& zv = z.value();
  if (zv.rank() != 3 || loc.value().size() != static_cast<std::size_t>(zv.channels()) ||
      log_scale.value().size() != loc.value().size()) {
    throw ShapeError("logistic_rate_bits: per-channel parameter mismatch");
  }
  double bits = 0.0;
  for (int c = 0; c < zv.channels(); ++c) {
    const double l = loc.value()[static_cast<std::size_t>(c)];
    const double ls = log_scale.value()[static_cast<std::size_t>(c)];
    for (double v : zv.channel(c)) {
      bits -= std::log2(std::max(logistic_bin(v - l, ls).p, kLikelihoodFloor));
    }
  }
  return scalar_result(
      *z.tape, bits, {z, loc, log_scale}, [z, loc, log_scale](Tape& t, const Tensor& g) {
        const Tensor& zv = z.value();
        Tensor* gz = t.requires_grad(z) ? &t.grad_buffer(z) : nullptr;
        Tensor* gl = t.requires_grad(loc) ? &t.grad_buffer(loc) : nullptr;
        Tensor* gs = t.requires_grad(log_scale) ? &t.grad_buffer(log_scale) : nullptr;
        const double k = -g[0] / std::log(2.0);
        for (int c = 0; c < zv.channels(); ++c) {
          const auto cu = static_cast<std::size_t>(c);
          const double l = loc.value()[cu];
          const double ls = log_scale.value()[cu];
          const std::size_t base = cu * zv.plane();
          for (std::size_t j = 0; j < zv.plane(); ++j) {
            const double off = zv[base + j] - l;
            const BinMass b = logistic_bin(off, ls);
            if (b.p < kLikelihoodFloor) continue;
            const double dv = k * b.d_offset / b.p;
            const double sgn = off > 0.0 ? 1.0 : (off < 0.0 ? -1.0 : 0.0);
            if (gz) (*gz)[base + j] += dv * sgn;
            if (gl) (*gl)[cu] -= dv * sgn;
            if (gs) (*gs)[cu] += k * b.d_scale / b.p;
          }
        }
      });
}

}  // namespace ad
}  // namespace crossctx
