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

// Quantization, the serial latent coder and the on-disk formats.
//
// Coding order: for each pass of the context model (segments for the grouped
// model), raster order over positions, and at each position every channel of
// the pass. The (mu, sigma) of a step come from the context model evaluated on
// already-coded values only; the residual y - round(mu) is coded against the
// scale-table CDF selected by sigma. Encoder and decoder run the same schedule
// code, so their parameter sequences are identical.

#ifndef CROSSCTX_CODEC_H_
#define CROSSCTX_CODEC_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "crossctx/context_pipeline.h"
#include "crossctx/entropy_models.h"
#include "crossctx/latent.h"
#include "crossctx/range_coder.h"
#include "crossctx/rng.h"

namespace crossctx {

// Nearest integer, ties away from zero.
LatentTensor quantize_round(const Tensor& y);
// y + u, u ~ U(-0.5, 0.5); training proxy.
Tensor quantize_noise(const Tensor& y, Rng& rng);

void encode_residual(RangeEncoder& enc, std::span<const std::uint32_t> cdf,
                     const SymbolAlphabet& alphabet, std::int64_t residual, int precision);
std::int64_t decode_residual(RangeDecoder& dec, std::span<const std::uint32_t> cdf,
                             const SymbolAlphabet& alphabet, int precision);

struct CodingTrace {
  // One entry per coded element, in coding order.
  std::vector<Position> order;
  std::vector<double> mu;
  std::vector<double> sigma;
  // Masked-conv invocations that had to run one after another.
  std::uint64_t serial_steps = 0;
  // Ideal bits under the integer CDFs, escapes included.
  double table_bits = 0.0;
  std::size_t escapes = 0;
};

// With audit on, any read of a not-yet-coded latent throws
// CausalityViolation.
std::vector<std::uint8_t> encode_latents(const LatentTensor& latents,
                                         const ContextModelBundle& bundle, const Tensor& psi,
                                         CodingTrace* trace = nullptr, bool audit = false);
LatentTensor decode_latents(std::span<const std::uint8_t> payload,
                            const ContextModelBundle& bundle, const Tensor& psi, int height,
                            int width, CodingTrace* trace = nullptr, bool audit = false);

// Hyper latents, channel by channel in raster order. Zero channels give an
// empty payload.
std::vector<std::uint8_t> encode_hyper(const LatentTensor& z, const FactorizedPrior& prior,
                                       double* table_bits = nullptr);
LatentTensor decode_hyper(std::span<const std::uint8_t> payload, const FactorizedPrior& prior,
                          int channels, int height, int width);

inline constexpr std::uint32_t kBitstreamVersion = 1;

struct BitstreamHeader {
  int channels = 0;
  int height = 0;
  int width = 0;
  int groups = 0;
  ContextKind kind = ContextKind::kGrouped;
  ScaleTableConfig scale;
  std::uint64_t fingerprint = 0;
  double lambda = 0.0;
  int hyper_channels = 0;
  int hyper_height = 0;
  int hyper_width = 0;
};

struct Bitstream {
  BitstreamHeader header;
  std::vector<std::uint8_t> hyper_payload;
  std::vector<std::uint8_t> latent_payload;
};

// "CCCB", little-endian, trailing CRC32 over everything before it.
std::vector<std::uint8_t> serialize_bitstream(const Bitstream& stream);
// Throws FormatError on bad magic, version, length or checksum.
Bitstream parse_bitstream(std::span<const std::uint8_t> bytes);
std::size_t bitstream_header_bytes();

// "CCCT": rank-3 dims then raw int32 values.
std::vector<std::uint8_t> serialize_latents(const LatentTensor& t);
LatentTensor parse_latents(std::span<const std::uint8_t> bytes);
void save_latents(const std::filesystem::path& path, const LatentTensor& t);
LatentTensor load_latents(const std::filesystem::path& path);

}  // namespace crossctx

#endif  // CROSSCTX_CODEC_H_
