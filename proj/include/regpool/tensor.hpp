/* Copyright (c) 2026 regpool Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace regpool {

/// Dense multi-dimensional array of doubles, row-major (last axis fastest).
/// Values are mutable through data()/operator(), but all free functions below
/// treat their inputs as read-only; a Tensor may be shared across threads as
/// long as nobody writes to it.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  static Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }

  static Tensor from(std::vector<std::size_t> shape,
                     std::vector<double> values) {
    if (count(shape) != values.size()) {
      throw std::invalid_argument(
          "Tensor::from: value count " + std::to_string(values.size()) +
          " does not match shape volume " + std::to_string(count(shape)));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  template <typename... Ix>
  double& operator()(Ix... ix) {
    return data_[flat_index({static_cast<std::size_t>(ix)...})];
  }
  template <typename... Ix>
  double operator()(Ix... ix) const {
    return data_[flat_index({static_cast<std::size_t>(ix)...})];
  }

  /// Row-major flat offset of a full multi-index.
  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw std::invalid_argument("Tensor::offset: index rank mismatch");
    }
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < shape_.size(); ++axis) {
      if (index[axis] >= shape_[axis]) {
        throw std::invalid_argument("Tensor::offset: index out of range on axis " +
                                    std::to_string(axis));
      }
      flat = flat * shape_[axis] + index[axis];
    }
    return flat;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << ',';
      os << shape_[i];
    }
    os << ']';
    return os.str();
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> ix) const {
    std::size_t flat = 0;
    auto it = ix.begin();
    for (std::size_t axis = 0; axis < shape_.size(); ++axis, ++it) {
      flat = flat * shape_[axis] + *it;
    }
    return flat;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape_string() + " vs " + b.shape_string());
  }
}

/// result[i] = op(a[i], b[i]) over flat indices.
template <typename BinaryOp>
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(std::plus<double>{}, a, b);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(std::minus<double>{}, a, b);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(std::multiplies<double>{}, a, b);
}

inline Tensor scale(const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

inline double sum(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

/// Position of the maximum inside the window of extent win_h x win_w over the
/// last two axes, anchored at `origin` (a full multi-index). Ties go to the
/// first position in row-major scan order. Returned coordinates are
/// window-relative.
inline std::pair<std::size_t, std::size_t> argmax_window(
    const Tensor& t, std::span<const std::size_t> origin, std::size_t win_h,
    std::size_t win_w) {
  const std::size_t rank = t.rank();
  if (rank < 2 || origin.size() != rank) {
    throw std::invalid_argument("argmax_window: needs rank >= 2 and a full origin index");
  }
  if (win_h == 0 || win_w == 0) {
    throw std::invalid_argument("argmax_window: extent must be positive");
  }
  const std::size_t height = t.extent(rank - 2);
  const std::size_t width = t.extent(rank - 1);
  if (origin[rank - 2] + win_h > height || origin[rank - 1] + win_w > width) {
    throw std::invalid_argument("argmax_window: window exceeds tensor bounds");
  }
  const std::size_t base = t.offset(origin);
  std::size_t best_r = 0, best_c = 0;
  double best = t[base];
  for (std::size_t r = 0; r < win_h; ++r) {
    const double* row = t.data() + base + r * width;
    for (std::size_t c = 0; c < win_w; ++c) {
      if (row[c] > best) {
        best = row[c];
        best_r = r;
        best_c = c;
      }
    }
  }
  return {best_r, best_c};
}

inline std::pair<std::size_t, std::size_t> argmax_window(
    const Tensor& t, std::initializer_list<std::size_t> origin,
    std::size_t win_h, std::size_t win_w) {
  std::vector<std::size_t> o(origin);
  return argmax_window(t, std::span<const std::size_t>(o), win_h, win_w);
}

}  // namespace regpool
