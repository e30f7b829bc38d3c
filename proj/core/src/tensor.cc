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

#include "crossctx/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crossctx {

std::size_t element_count(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> dims, double fill)
    : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

Tensor::Tensor(std::vector<int> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != element_count(dims_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match dims " + shape_string());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::slice_channels(int begin, int end) const {
  if (rank() != 3 || begin < 0 || end > dims_[0] || begin > end) {
    throw ShapeError("slice_channels [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for " + shape_string());
  }
  Tensor out({end - begin, dims_[1], dims_[2]});
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * plane()),
            data_.begin() + static_cast<std::ptrdiff_t>(end * plane()), out.data_.begin());
  return out;
}

Tensor Tensor::concat_channels(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels of nothing");
  const int h = parts[0]->height();
  const int w = parts[0]->width();
  int c = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != 3 || p->height() != h || p->width() != w) {
      throw ShapeError("concat_channels spatial mismatch: " + p->shape_string());
    }
    c += p->channels();
  }
  Tensor out({c, h, w});
  auto it = out.data_.begin();
  for (const Tensor* p : parts) it = std::copy(p->data_.begin(), p->data_.end(), it);
  return out;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ')';
  return os.str();
}

void ensure_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) {
    throw NonFiniteError(std::string("non-finite value in ") + where);
  }
}

void ensure_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace crossctx
