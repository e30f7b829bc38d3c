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

// Byte-oriented range coder with a 32-bit range and carry propagation
// through a pending-byte count.
//
// Symbols are coded against integer CDFs of total 2^precision. The first
// byte such a coder emits is always zero and is dropped; at the end the
// encoder picks the value with the most trailing zero bytes inside the final
// interval and omits them, since the decoder reads zeros past the end.

#ifndef CROSSCTX_RANGE_CODER_H_
#define CROSSCTX_RANGE_CODER_H_

#include <cstdint>
#include <span>
#include <vector>

namespace crossctx {

class RangeEncoder {
 public:
  RangeEncoder() = default;

  // Codes the interval [start, start + size) out of 2^precision.
  void encode(std::uint32_t start, std::uint32_t size, int precision);
  // cdf has alphabet size + 1 entries, cdf.back() == 2^precision.
  void encode_symbol(std::span<const std::uint32_t> cdf, int symbol, int precision);
  // nbits equiprobable bits, most significant first.
  void encode_bits(std::uint64_t value, int nbits);

  // Flushes and returns the payload; the encoder must not be used afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();
  void put(std::uint8_t b);

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;
  bool first_ = true;
  bool used_ = false;
  bool finished_ = false;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> payload);

  // Throws FormatError when the stream cannot have come from the encoder.
  int decode_symbol(std::span<const std::uint32_t> cdf, int precision);
  std::uint64_t decode_bits(int nbits);

  // Bytes consumed so far, counting reads past the end.
  std::size_t consumed() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  std::uint8_t next();
  void normalize();

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace crossctx

#endif  // CROSSCTX_RANGE_CODER_H_
