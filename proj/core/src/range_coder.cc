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

#include "crossctx/range_coder.h"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "crossctx/binary_io.h"

namespace crossctx {
namespace {

constexpr std::uint32_t kTop = 1u << 24;

void check_precision(int precision) {
  if (precision < 1 || precision > 16) {
    throw std::invalid_argument("range coder precision must be in [1, 16]");
  }
}

}  // namespace

void RangeEncoder::put(std::uint8_t b) {
  if (first_) {
    first_ = false;  // always zero
    return;
  }
  out_.push_back(b);
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      put(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--pending_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++pending_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(std::uint32_t start, std::uint32_t size, int precision) {
  check_precision(precision);
  const std::uint32_t total = 1u << precision;
  if (finished_) throw std::logic_error("range encoder already finished");
  if (size == 0 || start + size > total) {
    throw std::invalid_argument("range coder interval outside [0, 2^precision)");
  }
  used_ = true;
  const std::uint32_t r = range_ >> precision;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * size;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_symbol(std::span<const std::uint32_t> cdf, int symbol,
                                 int precision) {
  if (symbol < 0 || static_cast<std::size_t>(symbol) + 1 >= cdf.size()) {
    throw std::out_of_range("symbol " + std::to_string(symbol) + " outside alphabet");
  }
  const auto s = static_cast<std::size_t>(symbol);
  encode(cdf[s], cdf[s + 1] - cdf[s], precision);
}

void RangeEncoder::encode_bits(std::uint64_t value, int nbits) {
  for (int i = nbits - 1; i >= 0; --i) encode(static_cast<std::uint32_t>((value >> i) & 1u), 1, 1);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (finished_) throw std::logic_error("range encoder already finished");
  finished_ = true;
  // Round low up to a multiple of 2^24; it stays below low + range because
  // range >= 2^24 after renormalization.
  // Only the top byte of the rounded low carries information; the three
  // zero bytes below it are implied by the decoder's zero padding. Nothing
  // else is trimmed, so the payload never undercuts the coded information.
  if (!used_) return {};
  low_ = (low_ + kTop - 1) & ~static_cast<std::uint64_t>(kTop - 1);
  for (int i = 0; i < 5; ++i) shift_low();
  out_.resize(out_.size() - 3);
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> payload) : data_(payload) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
  const std::uint8_t b = pos_ < data_.size() ? data_[pos_] : 0;
  ++pos_;
  return b;
}

void RangeDecoder::normalize() {
  while (range_ < kTop) {
    code_ = (code_ << 8) | next();
    range_ <<= 8;
  }
}

int RangeDecoder::decode_symbol(std::span<const std::uint32_t> cdf, int precision) {
  check_precision(precision);
  const std::uint32_t total = 1u << precision;
  if (cdf.size() < 2 || cdf.back() != total) throw std::invalid_argument("malformed CDF");
  const std::uint32_t r = range_ >> precision;
  const std::uint32_t q = code_ / r;
  if (q >= total) throw FormatError("range decoder state outside the coding interval");
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), q);
  const auto s = static_cast<std::size_t>(it - cdf.begin()) - 1;
  code_ -= r * cdf[s];
  range_ = r * (cdf[s + 1] - cdf[s]);
  normalize();
  return static_cast<int>(s);
}

std::uint64_t RangeDecoder::decode_bits(int nbits) {
  static constexpr std::uint32_t kFair[] = {0, 1, 2};
  std::uint64_t v = 0;
  for (int i = 0; i < nbits; ++i) v = (v << 1) | static_cast<std::uint64_t>(decode_symbol(kFair, 1));
  return v;
}

}  // namespace crossctx
