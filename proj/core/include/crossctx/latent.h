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

#ifndef CROSSCTX_LATENT_H_
#define CROSSCTX_LATENT_H_

#include <cstdint>
#include <vector>

#include "crossctx/tensor.h"

namespace crossctx {

// Integer-quantized latents, (channels, height, width) row-major.
class LatentTensor {
 public:
  LatentTensor() = default;
  LatentTensor(int c, int h, int w, std::int32_t fill = 0)
      : c_(c), h_(h), w_(w),
        data_(static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
                  static_cast<std::size_t>(w),
              fill) {
    if (c < 0 || h < 0 || w < 0) throw ShapeError("negative latent dimension");
  }

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }

  std::int32_t& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
  }
  std::int32_t at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
  }
  std::int32_t& operator[](std::size_t i) { return data_[i]; }
  std::int32_t operator[](std::size_t i) const { return data_[i]; }
  const std::vector<std::int32_t>& values() const { return data_; }

  Tensor to_tensor() const {
    Tensor t({c_, h_, w_});
    for (std::size_t i = 0; i < data_.size(); ++i) t[i] = static_cast<double>(data_[i]);
    return t;
  }
  bool same_shape(const Tensor& t) const {
    return t.rank() == 3 && t.channels() == c_ && t.height() == h_ && t.width() == w_;
  }

  friend bool operator==(const LatentTensor& a, const LatentTensor& b) {
    return a.c_ == b.c_ && a.h_ == b.h_ && a.w_ == b.w_ && a.data_ == b.data_;
  }

 private:
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<std::int32_t> data_;
};

}  // namespace crossctx

#endif  // CROSSCTX_LATENT_H_
