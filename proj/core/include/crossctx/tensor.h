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

#ifndef CROSSCTX_TENSOR_H_
#define CROSSCTX_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crossctx {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles. Feature maps are (channels, height,
// width); convolution kernels are (out, in, kh, kw); biases are (out).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0);
  Tensor(std::vector<int> dims, std::vector<double> data);

  static Tensor chw(int c, int h, int w, double fill = 0.0) {
    return Tensor({c, h, w}, fill);
  }

  const std::vector<int>& dims() const { return dims_; }
  int rank() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Feature-map accessors; only meaningful for rank 3.
  int channels() const { return dims_[0]; }
  int height() const { return dims_[1]; }
  int width() const { return dims_[2]; }
  std::size_t plane() const {
    return static_cast<std::size_t>(dims_[1]) * static_cast<std::size_t>(dims_[2]);
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> channel(int c) { return {data_.data() + c * plane(), plane()}; }
  std::span<const double> channel(int c) const {
    return {data_.data() + c * plane(), plane()};
  }

  void fill(double v);
  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

  // Channels [begin, end) of a rank-3 tensor.
  Tensor slice_channels(int begin, int end) const;
  static Tensor concat_channels(std::span<const Tensor* const> parts);

  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  std::vector<int> dims_;
  std::vector<double> data_;
};

std::size_t element_count(const std::vector<int>& dims);

// Throws NonFiniteError naming `where` if any element is NaN or infinite.
void ensure_finite(const Tensor& t, const char* where);

void ensure_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace crossctx

#endif  // CROSSCTX_TENSOR_H_
