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

#include "crossctx/codec.h"

#include <cmath>
#include <limits>
#include <string>

#include "crossctx/binary_io.h"

namespace crossctx {
namespace {

constexpr int kMaxGolombPrefix = 62;

double interval_bits(std::span<const std::uint32_t> cdf, int idx, int precision) {
  const auto i = static_cast<std::size_t>(idx);
  return precision - std::log2(static_cast<double>(cdf[i + 1] - cdf[i]));
}

template <typename CodeFn>
void run_schedule(const ContextModelBundle& bundle, CausalContext& ctx, const Tensor& psi,
                  CodingTrace* trace, CodeFn code) {
  const int h = ctx.values().height();
  const int w = ctx.values().width();
  StepScratch scratch;
  std::vector<double> mu;
  std::vector<double> sigma;
  for (int pass = 0; pass < bundle.num_passes(); ++pass) {
    const Segment seg = bundle.pass_channels(pass);
    mu.assign(static_cast<std::size_t>(seg.size()), 0.0);
    sigma.assign(static_cast<std::size_t>(seg.size()), 0.0);
    bundle.begin_pass(pass, ctx, psi, scratch);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        bundle.predict(pass, y, x, ctx, psi, scratch, mu, sigma);
        if (trace != nullptr) ++trace->serial_steps;
        for (int j = 0; j < seg.size(); ++j) {
          const int c = seg.begin + j;
          const auto ju = static_cast<std::size_t>(j);
          const double v = code(c, y, x, mu[ju], sigma[ju]);
          ctx.set(c, y, x, v);
          if (trace != nullptr) {
            trace->order.push_back({c, y, x});
            trace->mu.push_back(mu[ju]);
            trace->sigma.push_back(sigma[ju]);
          }
        }
      }
    }
  }
}

}  // namespace

LatentTensor quantize_round(const Tensor& y) {
  ensure_finite(y, "quantize");
  if (y.rank() != 3) throw ShapeError("quantize expects a (C,H,W) tensor");
  LatentTensor q(y.channels(), y.height(), y.width());
  constexpr double kLimit = 2147483647.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = std::round(y[i]);
    if (std::fabs(r) > kLimit) throw std::out_of_range("latent value outside int32");
    q[i] = static_cast<std::int32_t>(r);
  }
  return q;
}

Tensor quantize_noise(const Tensor& y, Rng& rng) {
  ensure_finite(y, "quantize");
  Tensor out = y;
  for (double& v : out.values()) v += rng.uniform(-0.5, 0.5);
  return out;
}

void encode_residual(RangeEncoder& enc, std::span<const std::uint32_t> cdf,
                     const SymbolAlphabet& alphabet, std::int64_t residual, int precision) {
  const int idx = alphabet.index_of(residual);
  enc.encode_symbol(cdf, idx, precision);
  if (idx != alphabet.escape_index()) return;
  enc.encode_bits(residual < 0 ? 1 : 0, 1);
  const std::uint64_t v = static_cast<std::uint64_t>(residual < 0 ? -residual : residual) -
                          static_cast<std::uint64_t>(alphabet.half_width()) - 1;
  const int k = (exp_golomb_length(v) - 1) / 2;
  enc.encode_bits(0, k);
  enc.encode_bits(v + 1, k + 1);
}

std::int64_t decode_residual(RangeDecoder& dec, std::span<const std::uint32_t> cdf,
                             const SymbolAlphabet& alphabet, int precision) {
  const int idx = dec.decode_symbol(cdf, precision);
  if (idx != alphabet.escape_index()) return alphabet.residual_of(idx);
  const bool negative = dec.decode_bits(1) != 0;
  int k = 0;
  while (dec.decode_bits(1) == 0) {
    if (++k > kMaxGolombPrefix) throw FormatError("runaway Exp-Golomb prefix in stream");
  }
  const std::uint64_t v = ((std::uint64_t{1} << k) | dec.decode_bits(k)) - 1;
  const std::uint64_t magnitude = v + static_cast<std::uint64_t>(alphabet.half_width()) + 1;
  if (magnitude > (std::uint64_t{1} << 40)) throw FormatError("escaped residual out of range");
  const auto m = static_cast<std::int64_t>(magnitude);
  return negative ? -m : m;
}

std::vector<std::uint8_t> encode_latents(const LatentTensor& latents,
                                         const ContextModelBundle& bundle, const Tensor& psi,
                                         CodingTrace* trace, bool audit) {
  if (latents.channels() != bundle.channels()) {
    throw ShapeError("latents have " + std::to_string(latents.channels()) +
                     " channels, model expects " + std::to_string(bundle.channels()));
  }
  const ScaleTable& table = bundle.scale_table();
  const int precision = table.config().precision;
  RangeEncoder enc;
  CausalContext ctx(latents.channels(), latents.height(), latents.width(), audit);
  run_schedule(bundle, ctx, psi, trace, [&](int c, int y, int x, double mu, double sigma) {
    const std::int32_t symbol = latents.at(c, y, x);
    const std::int64_t residual = symbol - round_mean(mu);
    const auto cdf = table.cdf(sigma_to_table_index(sigma, table));
    encode_residual(enc, cdf, table.alphabet(), residual, precision);
    if (trace != nullptr) {
      const int idx = table.alphabet().index_of(residual);
      trace->table_bits += interval_bits(cdf, idx, precision);
      if (idx == table.alphabet().escape_index()) {
        ++trace->escapes;
        trace->table_bits += 1.0 + exp_golomb_length(
            static_cast<std::uint64_t>(std::llabs(residual)) - table.alphabet().half_width() - 1);
      }
    }
    return static_cast<double>(symbol);
  });
  return enc.finish();
}

LatentTensor decode_latents(std::span<const std::uint8_t> payload,
                            const ContextModelBundle& bundle, const Tensor& psi, int height,
                            int width, CodingTrace* trace, bool audit) {
  const ScaleTable& table = bundle.scale_table();
  const int precision = table.config().precision;
  RangeDecoder dec(payload);
  LatentTensor out(bundle.channels(), height, width);
  CausalContext ctx(bundle.channels(), height, width, audit);
  run_schedule(bundle, ctx, psi, trace, [&](int c, int y, int x, double mu, double sigma) {
    const auto cdf = table.cdf(sigma_to_table_index(sigma, table));
    const std::int64_t symbol =
        decode_residual(dec, cdf, table.alphabet(), precision) + round_mean(mu);
    if (symbol < std::numeric_limits<std::int32_t>::min() ||
        symbol > std::numeric_limits<std::int32_t>::max()) {
      throw FormatError("decoded latent outside int32");
    }
    out.at(c, y, x) = static_cast<std::int32_t>(symbol);
    return static_cast<double>(symbol);
  });
  return out;
}

std::vector<std::uint8_t> encode_hyper(const LatentTensor& z, const FactorizedPrior& prior,
                                       double* table_bits) {
  if (z.channels() != prior.channels()) {
    throw ShapeError("hyper latents have " + std::to_string(z.channels()) +
                     " channels, prior has " + std::to_string(prior.channels()));
  }
  if (table_bits != nullptr) *table_bits = 0.0;
  if (z.size() == 0) return {};
  RangeEncoder enc;
  for (int c = 0; c < z.channels(); ++c) {
    for (int y = 0; y < z.height(); ++y) {
      for (int x = 0; x < z.width(); ++x) {
        const std::int64_t residual = z.at(c, y, x) - prior.center(c);
        encode_residual(enc, prior.cdf(c), prior.alphabet(), residual, prior.precision());
        if (table_bits != nullptr) *table_bits += prior.table_bits(c, z.at(c, y, x));
      }
    }
  }
  return enc.finish();
}

LatentTensor decode_hyper(std::span<const std::uint8_t> payload, const FactorizedPrior& prior,
                          int channels, int height, int width) {
  if (channels != prior.channels()) throw ShapeError("hyper channel count differs from prior");
  LatentTensor z(channels, height, width);
  if (z.size() == 0) {
    if (!payload.empty()) throw FormatError("non-empty payload for empty hyper latents");
    return z;
  }
  RangeDecoder dec(payload);
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::int64_t v =
            decode_residual(dec, prior.cdf(c), prior.alphabet(), prior.precision()) +
            prior.center(c);
        if (v < std::numeric_limits<std::int32_t>::min() ||
            v > std::numeric_limits<std::int32_t>::max()) {
          throw FormatError("decoded hyper latent outside int32");
        }
        z.at(c, y, x) = static_cast<std::int32_t>(v);
      }
    }
  }
  return z;
}

namespace {

void write_header(ByteWriter& w, const BitstreamHeader& h) {
  w.magic("CCCB");
  w.u32(kBitstreamVersion);
  w.u32(static_cast<std::uint32_t>(h.channels));
  w.u32(static_cast<std::uint32_t>(h.height));
  w.u32(static_cast<std::uint32_t>(h.width));
  w.u32(static_cast<std::uint32_t>(h.groups));
  w.u8(static_cast<std::uint8_t>(h.kind));
  w.f64(h.scale.sigma_min);
  w.f64(h.scale.sigma_max);
  w.u32(static_cast<std::uint32_t>(h.scale.num_scales));
  w.u32(static_cast<std::uint32_t>(h.scale.precision));
  w.u32(static_cast<std::uint32_t>(h.scale.alphabet_half));
  w.u32(static_cast<std::uint32_t>(h.scale.hyper_alphabet_half));
  w.u64(h.fingerprint);
  w.f64(h.lambda);
  w.u32(static_cast<std::uint32_t>(h.hyper_channels));
  w.u32(static_cast<std::uint32_t>(h.hyper_height));
  w.u32(static_cast<std::uint32_t>(h.hyper_width));
}

int checked_dim(std::uint32_t v, const char* what) {
  if (v > (1u << 20)) throw FormatError(std::string("implausible ") + what + " in bitstream");
  return static_cast<int>(v);
}

}  // namespace

std::size_t bitstream_header_bytes() {
  ByteWriter w;
  write_header(w, {});
  return w.size() + 12 + 4;  // payload lengths, total length, checksum
}

std::vector<std::uint8_t> serialize_bitstream(const Bitstream& s) {
  ByteWriter w;
  write_header(w, s.header);
  w.u32(static_cast<std::uint32_t>(s.hyper_payload.size()));
  w.u32(static_cast<std::uint32_t>(s.latent_payload.size()));
  const std::size_t total_at = w.size();
  w.u32(0);
  w.raw(s.hyper_payload);
  w.raw(s.latent_payload);
  w.patch_u32(total_at, static_cast<std::uint32_t>(w.size() + 4));
  w.u32(crc32(w.bytes()));
  return std::move(w.bytes());
}

Bitstream parse_bitstream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < bitstream_header_bytes()) throw FormatError("bitstream truncated");
  ByteReader r(bytes);
  r.expect_magic("CCCB");
  const std::uint32_t version = r.u32();
  if (version != kBitstreamVersion) {
    throw FormatError("unsupported bitstream version " + std::to_string(version));
  }
  Bitstream s;
  BitstreamHeader& h = s.header;
  h.channels = checked_dim(r.u32(), "channel count");
  h.height = checked_dim(r.u32(), "height");
  h.width = checked_dim(r.u32(), "width");
  h.groups = checked_dim(r.u32(), "group count");
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(ContextKind::kGrouped)) {
    throw FormatError("unknown context kind in bitstream");
  }
  h.kind = static_cast<ContextKind>(kind);
  h.scale.sigma_min = r.f64();
  h.scale.sigma_max = r.f64();
  h.scale.num_scales = checked_dim(r.u32(), "scale count");
  h.scale.precision = checked_dim(r.u32(), "precision");
  h.scale.alphabet_half = checked_dim(r.u32(), "alphabet");
  h.scale.hyper_alphabet_half = checked_dim(r.u32(), "alphabet");
  h.fingerprint = r.u64();
  h.lambda = r.f64();
  h.hyper_channels = checked_dim(r.u32(), "hyper channel count");
  h.hyper_height = checked_dim(r.u32(), "hyper height");
  h.hyper_width = checked_dim(r.u32(), "hyper width");
  const std::uint32_t hyper_len = r.u32();
  const std::uint32_t latent_len = r.u32();
  const std::uint32_t total = r.u32();
  if (total != bytes.size()) {
    throw FormatError("bitstream length " + std::to_string(bytes.size()) +
                      " differs from recorded " + std::to_string(total));
  }
  if (static_cast<std::uint64_t>(hyper_len) + latent_len + 4 != r.remaining()) {
    throw FormatError("bitstream payload lengths inconsistent");
  }
  ByteReader tail(bytes.last(4));
  if (tail.u32() != crc32(bytes.first(bytes.size() - 4))) {
    throw FormatError("bitstream checksum mismatch");
  }
  const auto hp = r.raw(hyper_len);
  const auto lp = r.raw(latent_len);
  s.hyper_payload.assign(hp.begin(), hp.end());
  s.latent_payload.assign(lp.begin(), lp.end());
  return s;
}

std::vector<std::uint8_t> serialize_latents(const LatentTensor& t) {
  ByteWriter w;
  w.magic("CCCT");
  w.u32(3);
  w.u32(static_cast<std::uint32_t>(t.channels()));
  w.u32(static_cast<std::uint32_t>(t.height()));
  w.u32(static_cast<std::uint32_t>(t.width()));
  for (std::int32_t v : t.values()) w.i32(v);
  return std::move(w.bytes());
}

LatentTensor parse_latents(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("CCCT");
  if (r.u32() != 3) throw FormatError("latent tensor file must be rank 3");
  const std::uint32_t c = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const std::uint64_t n = static_cast<std::uint64_t>(c) * h * w;
  if (n * 4 != r.remaining()) {
    throw FormatError("latent tensor file holds " + std::to_string(r.remaining()) +
                      " data bytes, dims need " + std::to_string(n * 4));
  }
  LatentTensor t(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.i32();
  return t;
}

void save_latents(const std::filesystem::path& path, const LatentTensor& t) {
  write_file(path, serialize_latents(t));
}

LatentTensor load_latents(const std::filesystem::path& path) {
  return parse_latents(read_file(path));
}

}  // namespace crossctx
