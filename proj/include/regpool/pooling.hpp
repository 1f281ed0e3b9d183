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

// Regularized pooling: instead of taking each kernel's maximum independently,
// extract the displacement from every kernel center to its in-kernel argmax,
// smooth those displacement vectors over a window of adjacent kernels,
// quantize them back to integer offsets, and gather the input values the
// smoothed directions point at. Plain max and average pooling live here too.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "regpool/tensor.hpp"

namespace regpool {

enum class Padding {
  none,       // kernels fully inside the map; output I = floor((H-n)/s) + 1
  same_count  // output I = floor((H-1)/s) + 1; out-of-map cells behave as pad
};

struct PoolConfig {
  std::size_t kernel = 2;         // n: square kernel side, in input pixels
  std::size_t smooth_window = 1;  // w: odd number of adjacent kernels averaged
  std::size_t stride = 2;         // s: kernel step, in input pixels
  Padding padding = Padding::none;

  void validate() const {
    if (kernel < 1) throw std::invalid_argument("PoolConfig: kernel must be >= 1");
    if (stride < 1) throw std::invalid_argument("PoolConfig: stride must be >= 1");
    if (smooth_window < 1 || smooth_window % 2 == 0) {
      throw std::invalid_argument("PoolConfig: smoothing window must be a positive odd integer");
    }
  }
};

namespace detail {

template <typename Cell>
struct Grid4 {
  std::size_t batch = 0, channels = 0, rows = 0, cols = 0;
  std::vector<Cell> cells;

  Grid4() = default;
  Grid4(std::size_t n, std::size_t c, std::size_t i, std::size_t j)
      : batch(n), channels(c), rows(i), cols(j), cells(n * c * i * j) {}

  std::size_t site_count() const { return cells.size(); }
  std::size_t index(std::size_t n, std::size_t c, std::size_t i,
                    std::size_t j) const {
    return ((n * channels + c) * rows + i) * cols + j;
  }
  Cell& at(std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return cells[index(n, c, i, j)];
  }
  const Cell& at(std::size_t n, std::size_t c, std::size_t i,
                 std::size_t j) const {
    return cells[index(n, c, i, j)];
  }
  bool same_extents(std::size_t n, std::size_t c, std::size_t i,
                    std::size_t j) const {
    return batch == n && channels == c && rows == i && cols == j;
  }
};

}  // namespace detail

/// Integer displacement vectors (row, col offsets from the kernel center),
/// one per pooling site. Legal component values depend on kernel parity:
/// odd n allows {-(n-1)/2 .. (n-1)/2}, even n allows {-n/2..-1, 1..n/2}.
struct DisplacementField : detail::Grid4<std::array<int, 2>> {
  using Grid4::Grid4;
};

/// Real-valued displacement vectors produced by window smoothing, before
/// quantization back to the integer domain.
struct SmoothedField : detail::Grid4<std::array<double, 2>> {
  using Grid4::Grid4;
};

/// Absolute input coordinate selected at each pooling site during a forward
/// pass; the backward pass routes gradients through these. A kPadCell
/// component marks a selection that landed on padding (value 0, no gradient).
struct GatherRecord : detail::Grid4<std::array<std::int64_t, 2>> {
  static constexpr std::int64_t kPadCell = -1;

  std::size_t in_height = 0, in_width = 0;

  GatherRecord() = default;
  GatherRecord(std::size_t n, std::size_t c, std::size_t i, std::size_t j,
               std::size_t h, std::size_t w)
      : Grid4(n, c, i, j), in_height(h), in_width(w) {}
};

/// Pooled output count per axis. With same_count padding the count follows
/// floor((H-1)/s)+1 regardless of kernel size; without padding the kernel
/// must fit, giving floor((H-n)/s)+1.
inline std::pair<std::size_t, std::size_t> output_dims(std::size_t height,
                                                       std::size_t width,
                                                       const PoolConfig& cfg) {
  cfg.validate();
  if (cfg.padding == Padding::same_count) {
    return {(height - 1) / cfg.stride + 1, (width - 1) / cfg.stride + 1};
  }
  if (height < cfg.kernel || width < cfg.kernel) {
    throw std::invalid_argument(
        "output_dims: input " + std::to_string(height) + "x" +
        std::to_string(width) + " smaller than kernel " +
        std::to_string(cfg.kernel) + " with no padding");
  }
  return {(height - cfg.kernel) / cfg.stride + 1,
          (width - cfg.kernel) / cfg.stride + 1};
}

/// Center-relative offset -> 0-based in-kernel index. For odd n the center is
/// the middle cell and 0 maps to it. For even n the center sits between
/// cells, offsets skip 0, and {-n/2..-1, 1..n/2} maps onto {0..n-1}.
inline std::size_t kernel_offset_to_index(int offset, std::size_t kernel) {
  const int n = static_cast<int>(kernel);
  if (n % 2 == 1) {
    const int half = (n - 1) / 2;
    if (offset < -half || offset > half) {
      throw std::invalid_argument("kernel_offset_to_index: offset " +
                                  std::to_string(offset) +
                                  " outside odd-kernel domain for n=" +
                                  std::to_string(n));
    }
    return static_cast<std::size_t>(offset + half);
  }
  const int half = n / 2;
  if (offset == 0 || offset < -half || offset > half) {
    throw std::invalid_argument("kernel_offset_to_index: offset " +
                                std::to_string(offset) +
                                " outside even-kernel domain for n=" +
                                std::to_string(n));
  }
  return static_cast<std::size_t>(offset < 0 ? offset + half
                                             : offset + half - 1);
}

/// Inverse of kernel_offset_to_index.
inline int kernel_index_to_offset(std::size_t index, std::size_t kernel) {
  const int n = static_cast<int>(kernel);
  if (index >= kernel) {
    throw std::invalid_argument("kernel_index_to_offset: index out of range");
  }
  const int i = static_cast<int>(index);
  if (n % 2 == 1) return i - (n - 1) / 2;
  return i < n / 2 ? i - n / 2 : i - n / 2 + 1;
}

namespace detail {

// Top/left extent the kernel grid sticks out of the map in same_count mode.
// The total overhang is split evenly, extra cell on the bottom/right.
inline std::pair<std::int64_t, std::int64_t> pad_offsets(std::size_t height,
                                                         std::size_t width,
                                                         const PoolConfig& cfg) {
  if (cfg.padding == Padding::none) return {0, 0};
  const auto [out_h, out_w] = output_dims(height, width, cfg);
  const std::int64_t span_h =
      static_cast<std::int64_t>((out_h - 1) * cfg.stride + cfg.kernel);
  const std::int64_t span_w =
      static_cast<std::int64_t>((out_w - 1) * cfg.stride + cfg.kernel);
  const std::int64_t pad_h = std::max<std::int64_t>(0, span_h - static_cast<std::int64_t>(height));
  const std::int64_t pad_w = std::max<std::int64_t>(0, span_w - static_cast<std::int64_t>(width));
  return {pad_h / 2, pad_w / 2};
}

inline void require_feature_map(const Tensor& x, const char* what) {
  if (x.rank() != 4) {
    throw std::invalid_argument(std::string(what) +
                                ": expected a rank-4 (N,C,H,W) feature map, got " +
                                x.shape_string());
  }
}

}  // namespace detail

struct ExtractResult {
  DisplacementField displacements;
  Tensor max_values;    // plain max-pool output
  GatherRecord argmax;  // absolute argmax coordinates
};

struct PoolResult {
  Tensor values;
  GatherRecord record;
};

/// Per-kernel displacement extraction: for every pooling site, scan the n x n
/// window (row-major, first maximum wins) and report the argmax position as a
/// center-relative offset. Out-of-map cells under same_count padding never
/// win the scan. Also yields the max-pool output and argmax record for free.
inline ExtractResult extract_displacements(const Tensor& x,
                                           const PoolConfig& cfg) {
  detail::require_feature_map(x, "extract_displacements");
  cfg.validate();
  const std::size_t batch = x.extent(0), channels = x.extent(1);
  const std::size_t height = x.extent(2), width = x.extent(3);
  const auto [out_h, out_w] = output_dims(height, width, cfg);
  const auto [pad_top, pad_left] = detail::pad_offsets(height, width, cfg);
  const std::int64_t n = static_cast<std::int64_t>(cfg.kernel);

  ExtractResult result{DisplacementField(batch, channels, out_h, out_w),
                       Tensor::zeros({batch, channels, out_h, out_w}),
                       GatherRecord(batch, channels, out_h, out_w, height, width)};

  std::size_t site = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* plane = x.data() + (b * channels + c) * height * width;
      for (std::size_t i = 0; i < out_h; ++i) {
        const std::int64_t origin_r =
            static_cast<std::int64_t>(i * cfg.stride) - pad_top;
        for (std::size_t j = 0; j < out_w; ++j, ++site) {
          const std::int64_t origin_c =
              static_cast<std::int64_t>(j * cfg.stride) - pad_left;
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_kr = 0, best_kc = 0;
          std::int64_t best_r = 0, best_c = 0;
          for (std::int64_t kr = 0; kr < n; ++kr) {
            const std::int64_t r = origin_r + kr;
            if (r < 0 || r >= static_cast<std::int64_t>(height)) continue;
            const double* row = plane + r * width;
            for (std::int64_t kc = 0; kc < n; ++kc) {
              const std::int64_t col = origin_c + kc;
              if (col < 0 || col >= static_cast<std::int64_t>(width)) continue;
              if (row[col] > best) {
                best = row[col];
                best_kr = static_cast<std::size_t>(kr);
                best_kc = static_cast<std::size_t>(kc);
                best_r = r;
                best_c = col;
              }
            }
          }
          result.displacements.cells[site] = {
              kernel_index_to_offset(best_kr, cfg.kernel),
              kernel_index_to_offset(best_kc, cfg.kernel)};
          result.max_values[site] = best;
          result.argmax.cells[site] = {best_r, best_c};
        }
      }
    }
  }
  return result;
}

/// Average each site's displacement vector over the window x window block of
/// neighboring sites, dividing by window^2. Neighbor indices past the field
/// edge are clamped to the nearest valid site (edge replication), which keeps
/// a constant field exactly constant.
inline SmoothedField smooth_displacements(const DisplacementField& field,
                                          std::size_t window) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("smooth_displacements: window must be a positive odd integer");
  }
  SmoothedField out(field.batch, field.channels, field.rows, field.cols);
  const std::int64_t half = static_cast<std::int64_t>(window) / 2;
  // true division, not reciprocal multiplication: integer-valued results must
  // come out exact or even-kernel quantization would round d to d+1
  const double denom = static_cast<double>(window) * static_cast<double>(window);
  const std::int64_t rows = static_cast<std::int64_t>(field.rows);
  const std::int64_t cols = static_cast<std::int64_t>(field.cols);
  for (std::size_t b = 0; b < field.batch; ++b) {
    for (std::size_t c = 0; c < field.channels; ++c) {
      for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) {
          double acc_r = 0.0, acc_c = 0.0;
          for (std::int64_t p = i - half; p <= i + half; ++p) {
            const std::size_t pi = static_cast<std::size_t>(std::clamp<std::int64_t>(p, 0, rows - 1));
            for (std::int64_t q = j - half; q <= j + half; ++q) {
              const std::size_t qj = static_cast<std::size_t>(std::clamp<std::int64_t>(q, 0, cols - 1));
              const auto& d = field.at(b, c, pi, qj);
              acc_r += d[0];
              acc_c += d[1];
            }
          }
          out.at(b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
              {acc_r / denom, acc_c / denom};
        }
      }
    }
  }
  return out;
}

namespace detail {

// Round half away from zero; used for odd kernels.
inline int round_nearest_away(double x) {
  return static_cast<int>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

// Round away from zero so the result is never 0; used for even kernels,
// whose displacement domain excludes 0. Exactly 0.0 maps to +1.
inline int round_away_nonzero(double x) {
  if (x > 0.0) return static_cast<int>(std::ceil(x));
  if (x < 0.0) return static_cast<int>(std::floor(x));
  return 1;
}

}  // namespace detail

/// Quantize smoothed displacements back to the integer domain legal for the
/// kernel's parity.
inline DisplacementField quantize_displacements(const SmoothedField& field,
                                                std::size_t kernel) {
  DisplacementField out(field.batch, field.channels, field.rows, field.cols);
  const bool odd = kernel % 2 == 1;
  const double limit = odd ? (kernel - 1) / 2.0 : kernel / 2.0;
  for (std::size_t s = 0; s < field.site_count(); ++s) {
    for (int k = 0; k < 2; ++k) {
      const double v = field.cells[s][k];
      if (std::abs(v) > limit) {
        throw std::invalid_argument(
            "quantize_displacements: component " + std::to_string(v) +
            " outside legal range for kernel " + std::to_string(kernel));
      }
      out.cells[s][k] = odd ? detail::round_nearest_away(v)
                            : detail::round_away_nonzero(v);
    }
  }
  return out;
}

/// Select, per pooling site, the input value the displacement vector points
/// at. No arithmetic on values: the output is a subsample of the input. Under
/// same_count padding a selection landing outside the map yields 0 and is
/// recorded as a pad cell.
inline PoolResult gather_pooled(const Tensor& x, const DisplacementField& field,
                                const PoolConfig& cfg) {
  detail::require_feature_map(x, "gather_pooled");
  cfg.validate();
  const std::size_t batch = x.extent(0), channels = x.extent(1);
  const std::size_t height = x.extent(2), width = x.extent(3);
  const auto [out_h, out_w] = output_dims(height, width, cfg);
  if (!field.same_extents(batch, channels, out_h, out_w)) {
    throw std::invalid_argument("gather_pooled: displacement field extents do not match pooled dims");
  }
  const auto [pad_top, pad_left] = detail::pad_offsets(height, width, cfg);

  PoolResult result{Tensor::zeros({batch, channels, out_h, out_w}),
                    GatherRecord(batch, channels, out_h, out_w, height, width)};
  std::size_t site = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* plane = x.data() + (b * channels + c) * height * width;
      for (std::size_t i = 0; i < out_h; ++i) {
        for (std::size_t j = 0; j < out_w; ++j, ++site) {
          const auto& d = field.cells[site];
          const std::size_t kr = kernel_offset_to_index(d[0], cfg.kernel);
          const std::size_t kc = kernel_offset_to_index(d[1], cfg.kernel);
          const std::int64_t r =
              static_cast<std::int64_t>(i * cfg.stride + kr) - pad_top;
          const std::int64_t col =
              static_cast<std::int64_t>(j * cfg.stride + kc) - pad_left;
          if (r < 0 || r >= static_cast<std::int64_t>(height) || col < 0 ||
              col >= static_cast<std::int64_t>(width)) {
            result.values[site] = 0.0;
            result.record.cells[site] = {GatherRecord::kPadCell,
                                         GatherRecord::kPadCell};
          } else {
            result.values[site] = plane[r * width + col];
            result.record.cells[site] = {r, col};
          }
        }
      }
    }
  }
  return result;
}

/// The full operator: extract displacements, smooth them across adjacent
/// kernels, quantize, gather. With smooth_window == 1 this reduces exactly to
/// max pooling.
inline PoolResult regularized_pool_forward(const Tensor& x,
                                           const PoolConfig& cfg) {
  ExtractResult extracted = extract_displacements(x, cfg);
  SmoothedField smoothed =
      smooth_displacements(extracted.displacements, cfg.smooth_window);
  DisplacementField quantized = quantize_displacements(smoothed, cfg.kernel);
  return gather_pooled(x, quantized, cfg);
}

namespace detail {

inline Tensor scatter_backward(const Tensor& grad_out, const GatherRecord& rec,
                               const char* what) {
  if (grad_out.rank() != 4 ||
      !rec.same_extents(grad_out.extent(0), grad_out.extent(1),
                        grad_out.extent(2), grad_out.extent(3))) {
    throw std::invalid_argument(std::string(what) +
                                ": gradient shape does not match the forward record");
  }
  Tensor grad_in = Tensor::zeros(
      {rec.batch, rec.channels, rec.in_height, rec.in_width});
  std::size_t site = 0;
  for (std::size_t b = 0; b < rec.batch; ++b) {
    for (std::size_t c = 0; c < rec.channels; ++c) {
      double* plane =
          grad_in.data() + (b * rec.channels + c) * rec.in_height * rec.in_width;
      for (std::size_t i = 0; i < rec.rows; ++i) {
        for (std::size_t j = 0; j < rec.cols; ++j, ++site) {
          const auto& pos = rec.cells[site];
          if (pos[0] == GatherRecord::kPadCell) continue;
          if (pos[0] < 0 || pos[0] >= static_cast<std::int64_t>(rec.in_height) ||
              pos[1] < 0 || pos[1] >= static_cast<std::int64_t>(rec.in_width)) {
            throw std::invalid_argument(std::string(what) + ": corrupt gather record");
          }
          plane[pos[0] * rec.in_width + pos[1]] += grad_out[site];
        }
      }
    }
  }
  return grad_in;
}

}  // namespace detail

/// Route each output gradient to the input cell its value was gathered from.
/// The selection map is a constant of the backward pass; overlapping kernels
/// accumulate additively.
inline Tensor regularized_pool_backward(const Tensor& grad_out,
                                        const GatherRecord& rec) {
  return detail::scatter_backward(grad_out, rec, "regularized_pool_backward");
}

inline PoolResult max_pool_forward(const Tensor& x, const PoolConfig& cfg) {
  ExtractResult extracted = extract_displacements(x, cfg);
  return {std::move(extracted.max_values), std::move(extracted.argmax)};
}

inline Tensor max_pool_backward(const Tensor& grad_out,
                                const GatherRecord& rec) {
  return detail::scatter_backward(grad_out, rec, "max_pool_backward");
}

/// Window mean. The divisor is always kernel^2; under same_count padding
/// out-of-map cells contribute 0, matching a zero-padded input.
inline Tensor avg_pool_forward(const Tensor& x, const PoolConfig& cfg) {
  detail::require_feature_map(x, "avg_pool_forward");
  cfg.validate();
  const std::size_t batch = x.extent(0), channels = x.extent(1);
  const std::size_t height = x.extent(2), width = x.extent(3);
  const auto [out_h, out_w] = output_dims(height, width, cfg);
  const auto [pad_top, pad_left] = detail::pad_offsets(height, width, cfg);
  const std::int64_t n = static_cast<std::int64_t>(cfg.kernel);
  const double denom = static_cast<double>(cfg.kernel) * static_cast<double>(cfg.kernel);

  Tensor out = Tensor::zeros({batch, channels, out_h, out_w});
  std::size_t site = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double* plane = x.data() + (b * channels + c) * height * width;
      for (std::size_t i = 0; i < out_h; ++i) {
        const std::int64_t origin_r =
            static_cast<std::int64_t>(i * cfg.stride) - pad_top;
        for (std::size_t j = 0; j < out_w; ++j, ++site) {
          const std::int64_t origin_c =
              static_cast<std::int64_t>(j * cfg.stride) - pad_left;
          double acc = 0.0;
          for (std::int64_t kr = 0; kr < n; ++kr) {
            const std::int64_t r = origin_r + kr;
            if (r < 0 || r >= static_cast<std::int64_t>(height)) continue;
            const double* row = plane + r * width;
            for (std::int64_t kc = 0; kc < n; ++kc) {
              const std::int64_t col = origin_c + kc;
              if (col < 0 || col >= static_cast<std::int64_t>(width)) continue;
              acc += row[col];
            }
          }
          out[site] = acc / denom;
        }
      }
    }
  }
  return out;
}

/// Scatter grad/kernel^2 uniformly over each window's in-map cells.
inline Tensor avg_pool_backward(const Tensor& grad_out, const PoolConfig& cfg,
                                const std::array<std::size_t, 4>& in_shape) {
  detail::require_feature_map(grad_out, "avg_pool_backward");
  cfg.validate();
  const auto [batch, channels, height, width] = in_shape;
  const auto [out_h, out_w] = output_dims(height, width, cfg);
  if (grad_out.extent(0) != batch || grad_out.extent(1) != channels ||
      grad_out.extent(2) != out_h || grad_out.extent(3) != out_w) {
    throw std::invalid_argument("avg_pool_backward: gradient shape does not match pooled dims");
  }
  const auto [pad_top, pad_left] = detail::pad_offsets(height, width, cfg);
  const std::int64_t n = static_cast<std::int64_t>(cfg.kernel);
  const double denom = static_cast<double>(cfg.kernel) * static_cast<double>(cfg.kernel);

  Tensor grad_in = Tensor::zeros({batch, channels, height, width});
  std::size_t site = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* plane = grad_in.data() + (b * channels + c) * height * width;
      for (std::size_t i = 0; i < out_h; ++i) {
        const std::int64_t origin_r =
            static_cast<std::int64_t>(i * cfg.stride) - pad_top;
        for (std::size_t j = 0; j < out_w; ++j, ++site) {
          const std::int64_t origin_c =
              static_cast<std::int64_t>(j * cfg.stride) - pad_left;
          const double g = grad_out[site] / denom;
          for (std::int64_t kr = 0; kr < n; ++kr) {
            const std::int64_t r = origin_r + kr;
            if (r < 0 || r >= static_cast<std::int64_t>(height)) continue;
            double* row = plane + r * width;
            for (std::int64_t kc = 0; kc < n; ++kc) {
              const std::int64_t col = origin_c + kc;
              if (col < 0 || col >= static_cast<std::int64_t>(width)) continue;
              row[col] += g;
            }
          }
        }
      }
    }
  }
  return grad_in;
}

}  // namespace regpool
