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

// Minimal trainable CNN stack: conv / relu / pool / dropout / flatten / fc
// layers with hand-written backward passes, a sequential layer graph, and a
// fused softmax cross-entropy loss. Everything is double precision and
// deterministic given the seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "regpool/pooling.hpp"
#include "regpool/rng.hpp"
#include "regpool/tensor.hpp"

namespace regpool {

// ---------------------------------------------------------------------------
// Convolution (cross-correlation), NCHW, square kernel.
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                                   std::size_t stride, std::size_t pad,
                                   const char* what) {
  const std::int64_t span = static_cast<std::int64_t>(in) + 2 * static_cast<std::int64_t>(pad) -
                            static_cast<std::int64_t>(kernel);
  if (span < 0) {
    throw std::invalid_argument(std::string(what) + ": kernel larger than padded input");
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

// Output-index range [lo, hi] such that o*stride + k - pad stays in [0, in).
inline bool conv_tap_range(std::size_t out, std::size_t in, std::size_t stride,
                           std::int64_t shift, std::size_t& lo, std::size_t& hi) {
  // shift = k - pad
  std::int64_t lo64 = 0;
  if (shift < 0) {
    lo64 = (-shift + static_cast<std::int64_t>(stride) - 1) /
           static_cast<std::int64_t>(stride);
  }
  std::int64_t hi64 = (static_cast<std::int64_t>(in) - 1 - shift) /
                      static_cast<std::int64_t>(stride);
  hi64 = std::min<std::int64_t>(hi64, static_cast<std::int64_t>(out) - 1);
  if (hi64 < lo64) return false;
  lo = static_cast<std::size_t>(lo64);
  hi = static_cast<std::size_t>(hi64);
  return true;
}

}  // namespace detail

inline Tensor conv2d_forward(const Tensor& x, const Tensor& weight,
                             const Tensor& bias, std::size_t stride = 1,
                             std::size_t pad = 0) {
  detail::require_feature_map(x, "conv2d_forward");
  if (weight.rank() != 4 || bias.rank() != 1 ||
      bias.extent(0) != weight.extent(0)) {
    throw std::invalid_argument("conv2d_forward: weight must be (Cout,Cin,k,k) with matching bias");
  }
  if (weight.extent(1) != x.extent(1)) {
    throw std::invalid_argument("conv2d_forward: input channels " +
                                std::to_string(x.extent(1)) +
                                " do not match weight channels " +
                                std::to_string(weight.extent(1)));
  }
  if (weight.extent(2) != weight.extent(3)) {
    throw std::invalid_argument("conv2d_forward: kernel must be square");
  }
  const std::size_t batch = x.extent(0), cin = x.extent(1);
  const std::size_t height = x.extent(2), width = x.extent(3);
  const std::size_t cout = weight.extent(0), kernel = weight.extent(2);
  const std::size_t out_h = detail::conv_out_extent(height, kernel, stride, pad, "conv2d_forward");
  const std::size_t out_w = detail::conv_out_extent(width, kernel, stride, pad, "conv2d_forward");

  Tensor out = Tensor::zeros({batch, cout, out_h, out_w});
  // The reference network is built entirely from 3x3/stride-1/pad-1 convs;
  // that shape gets a register-blocked row kernel (three taps per store).
  const bool fast3 = kernel == 3 && stride == 1 && pad == 1 && out_w >= 2;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* out_plane = out.data() + (b * cout + co) * out_h * out_w;
      const double bv = bias[co];
      if (fast3) {
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          double* out_row = out_plane + oh * out_w;
          for (std::size_t i = 0; i < out_w; ++i) out_row[i] = bv;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* in_plane = x.data() + (b * cin + ci) * height * width;
            const double* w_cell = weight.data() + (co * cin + ci) * 9;
            for (std::size_t kh = 0; kh < 3; ++kh) {
              const std::int64_t ih = static_cast<std::int64_t>(oh) +
                                      static_cast<std::int64_t>(kh) - 1;
              if (ih < 0 || ih >= static_cast<std::int64_t>(height)) continue;
              const double* r = in_plane + static_cast<std::size_t>(ih) * width;
              const double w0 = w_cell[kh * 3], w1 = w_cell[kh * 3 + 1],
                           w2 = w_cell[kh * 3 + 2];
              out_row[0] += w1 * r[0] + w2 * r[1];
#pragma omp simd
              for (std::size_t ow = 1; ow < out_w - 1; ++ow) {
                out_row[ow] += w0 * r[ow - 1] + w1 * r[ow] + w2 * r[ow + 1];
              }
              out_row[out_w - 1] += w0 * r[out_w - 2] + w1 * r[out_w - 1];
            }
          }
        }
        continue;
      }
      for (std::size_t i = 0; i < out_h * out_w; ++i) out_plane[i] = bv;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* in_plane = x.data() + (b * cin + ci) * height * width;
        const double* w_cell = weight.data() + (co * cin + ci) * kernel * kernel;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          const std::int64_t row_shift = static_cast<std::int64_t>(kh) - static_cast<std::int64_t>(pad);
          std::size_t oh_lo, oh_hi;
          if (!detail::conv_tap_range(out_h, height, stride, row_shift, oh_lo, oh_hi)) continue;
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::int64_t col_shift = static_cast<std::int64_t>(kw) - static_cast<std::int64_t>(pad);
            std::size_t ow_lo, ow_hi;
            if (!detail::conv_tap_range(out_w, width, stride, col_shift, ow_lo, ow_hi)) continue;
            const double wv = w_cell[kh * kernel + kw];
            for (std::size_t oh = oh_lo; oh <= oh_hi; ++oh) {
              const double* in_row = in_plane + (oh * stride + kh - pad) * width;
              double* out_row = out_plane + oh * out_w;
              if (stride == 1) {
#pragma omp simd
                for (std::size_t ow = ow_lo; ow <= ow_hi; ++ow) {
                  out_row[ow] += wv * in_row[static_cast<std::int64_t>(ow) + col_shift];
                }
              } else {
                for (std::size_t ow = ow_lo; ow <= ow_hi; ++ow) {
                  out_row[ow] += wv * in_row[static_cast<std::int64_t>(ow * stride) + col_shift];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& weight,
                                   const Tensor& grad_out,
                                   std::size_t stride = 1, std::size_t pad = 0) {
  const std::size_t batch = x.extent(0), cin = x.extent(1);
  const std::size_t height = x.extent(2), width = x.extent(3);
  const std::size_t cout = weight.extent(0), kernel = weight.extent(2);
  const std::size_t out_h = detail::conv_out_extent(height, kernel, stride, pad, "conv2d_backward");
  const std::size_t out_w = detail::conv_out_extent(width, kernel, stride, pad, "conv2d_backward");
  if (grad_out.rank() != 4 || grad_out.extent(0) != batch ||
      grad_out.extent(1) != cout || grad_out.extent(2) != out_h ||
      grad_out.extent(3) != out_w) {
    throw std::invalid_argument("conv2d_backward: gradient shape mismatch");
  }

  Conv2dGrads grads{Tensor::zeros(x.shape()), Tensor::zeros(weight.shape()),
                    Tensor::zeros({cout})};

  // Bias: plain sums over each output channel.
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* g_plane = grad_out.data() + (b * cout + co) * out_h * out_w;
      double acc = 0.0;
      for (std::size_t i = 0; i < out_h * out_w; ++i) acc += g_plane[i];
      grads.bias[co] += acc;
    }
  }

  // Weights: correlate the stored input with the output gradient.
  const bool fast3 = kernel == 3 && stride == 1 && pad == 1 && out_w >= 2;
  if (fast3) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* wg_cell = grads.weight.data() + (co * cin + ci) * 9;
        for (std::size_t b = 0; b < batch; ++b) {
          const double* in_plane = x.data() + (b * cin + ci) * height * width;
          const double* g_plane = grad_out.data() + (b * cout + co) * out_h * out_w;
          for (std::size_t oh = 0; oh < out_h; ++oh) {
            const double* g_row = g_plane + oh * out_w;
            for (std::size_t kh = 0; kh < 3; ++kh) {
              const std::int64_t ih = static_cast<std::int64_t>(oh) +
                                      static_cast<std::int64_t>(kh) - 1;
              if (ih < 0 || ih >= static_cast<std::int64_t>(height)) continue;
              const double* r = in_plane + static_cast<std::size_t>(ih) * width;
              // edge columns: the out-of-map tap is simply absent
              double a0 = g_row[out_w - 1] * r[out_w - 2];
              double a1 = g_row[0] * r[0] + g_row[out_w - 1] * r[out_w - 1];
              double a2 = g_row[0] * r[1];
#pragma omp simd reduction(+ : a0, a1, a2)
              for (std::size_t ow = 1; ow < out_w - 1; ++ow) {
                const double g = g_row[ow];
                a0 += g * r[ow - 1];
                a1 += g * r[ow];
                a2 += g * r[ow + 1];
              }
              wg_cell[kh * 3] += a0;
              wg_cell[kh * 3 + 1] += a1;
              wg_cell[kh * 3 + 2] += a2;
            }
          }
        }
      }
    }
  } else {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* wg_cell = grads.weight.data() + (co * cin + ci) * kernel * kernel;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          const std::int64_t row_shift = static_cast<std::int64_t>(kh) - static_cast<std::int64_t>(pad);
          std::size_t oh_lo, oh_hi;
          if (!detail::conv_tap_range(out_h, height, stride, row_shift, oh_lo, oh_hi)) continue;
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::int64_t col_shift = static_cast<std::int64_t>(kw) - static_cast<std::int64_t>(pad);
            std::size_t ow_lo, ow_hi;
            if (!detail::conv_tap_range(out_w, width, stride, col_shift, ow_lo, ow_hi)) continue;
            double acc = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const double* in_plane = x.data() + (b * cin + ci) * height * width;
              const double* g_plane = grad_out.data() + (b * cout + co) * out_h * out_w;
              for (std::size_t oh = oh_lo; oh <= oh_hi; ++oh) {
                const double* in_row = in_plane + (oh * stride + kh - pad) * width;
                const double* g_row = g_plane + oh * out_w;
                if (stride == 1) {
#pragma omp simd reduction(+ : acc)
                  for (std::size_t ow = ow_lo; ow <= ow_hi; ++ow) {
                    acc += g_row[ow] * in_row[static_cast<std::int64_t>(ow) + col_shift];
                  }
                } else {
                  for (std::size_t ow = ow_lo; ow <= ow_hi; ++ow) {
                    acc += g_row[ow] * in_row[static_cast<std::int64_t>(ow * stride) + col_shift];
                  }
                }
              }
            }
            wg_cell[kh * kernel + kw] = acc;
          }
        }
      }
    }
  }

  // Input: scatter each output gradient through the kernel taps. For the
  // 3x3/stride-1/pad-1 shape this is a correlation with the 180-degree
  // rotated kernel, so it reuses the forward row stencil.
  if (fast3) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* ig_plane = grads.input.data() + (b * cin + ci) * height * width;
        for (std::size_t ih = 0; ih < height; ++ih) {
          double* ig_row = ig_plane + ih * width;
          for (std::size_t co = 0; co < cout; ++co) {
            const double* g_plane = grad_out.data() + (b * cout + co) * out_h * out_w;
            const double* w_cell = weight.data() + (co * cin + ci) * 9;
            for (std::size_t kh = 0; kh < 3; ++kh) {
              const std::int64_t oh = static_cast<std::int64_t>(ih) + 1 -
                                      static_cast<std::int64_t>(kh);
              if (oh < 0 || oh >= static_cast<std::int64_t>(out_h)) continue;
              const double* gr = g_plane + static_cast<std::size_t>(oh) * out_w;
              const double w0 = w_cell[kh * 3], w1 = w_cell[kh * 3 + 1],
                           w2 = w_cell[kh * 3 + 2];
              ig_row[0] += w0 * gr[1] + w1 * gr[0];
#pragma omp simd
              for (std::size_t iw = 1; iw < width - 1; ++iw) {
                ig_row[iw] += w0 * gr[iw + 1] + w1 * gr[iw] + w2 * gr[iw - 1];
              }
              ig_row[width - 1] += w1 * gr[width - 1] + w2 * gr[width - 2];
            }
          }
        }
      }
    }
    return grads;
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* g_plane = grad_out.data() + (b * cout + co) * out_h * out_w;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        double* ig_plane = grads.input.data() + (b * cin + ci) * height * width;
        const double* w_cell = weight.data() + (co * cin + ci) * kernel * kernel;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          const std::int64_t row_shift = static_cast<std::int64_t>(kh) - static_cast<std::int64_t>(pad);
          std::size_t oh_lo, oh_hi;
          if (!detail::conv_tap_range(out_h, height, stride, row_shift, oh_lo, oh_hi)) continue;
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const std::int64_t col_shift = static_cast<std::int64_t>(kw) - static_cast<std::int64_t>(pad);
            std::size_t ow_lo, ow_hi;
            if (!detail::conv_tap_range(out_w, width, stride, col_shift, ow_lo, ow_hi)) continue;
            const double wv = w_cell[kh * kernel + kw];
            for (std::size_t oh = oh_lo; oh <= oh_hi; ++oh) {
              double* ig_row = ig_plane + (oh * stride + kh - pad) * width;
              const double* g_row = g_plane + oh * out_w;
              if (stride == 1) {
#pragma omp simd
                for (std::size_t ow = ow_lo; ow <= ow_hi; ++ow) {
                  ig_row[static_cast<std::int64_t>(ow) + col_shift] += wv * g_row[ow];
                }
              } else {
                for (std::size_t ow = ow_lo; ow <= ow_hi; ++ow) {
                  ig_row[static_cast<std::int64_t>(ow * stride) + col_shift] += wv * g_row[ow];
                }
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Pointwise layers and fully-connected
// ---------------------------------------------------------------------------

inline Tensor relu_forward(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Tensor grad_in = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    grad_in[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
  }
  return grad_in;
}

inline Tensor fc_forward(const Tensor& x, const Tensor& weight,
                         const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.extent(1) != weight.extent(1) ||
      bias.extent(0) != weight.extent(0)) {
    throw std::invalid_argument("fc_forward: shape mismatch");
  }
  const std::size_t batch = x.extent(0), in = x.extent(1), out_n = weight.extent(0);
  Tensor out = Tensor::zeros({batch, out_n});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data() + b * in;
    for (std::size_t k = 0; k < out_n; ++k) {
      const double* wr = weight.data() + k * in;
      double acc = bias[k];
      for (std::size_t d = 0; d < in; ++d) acc += wr[d] * xr[d];
      out(b, k) = acc;
    }
  }
  return out;
}

struct FcGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

inline FcGrads fc_backward(const Tensor& x, const Tensor& weight,
                           const Tensor& grad_out) {
  const std::size_t batch = x.extent(0), in = x.extent(1), out_n = weight.extent(0);
  if (grad_out.rank() != 2 || grad_out.extent(0) != batch ||
      grad_out.extent(1) != out_n) {
    throw std::invalid_argument("fc_backward: gradient shape mismatch");
  }
  FcGrads grads{Tensor::zeros(x.shape()), Tensor::zeros(weight.shape()),
                Tensor::zeros({out_n})};
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data() + b * in;
    const double* gr = grad_out.data() + b * out_n;
    double* ir = grads.input.data() + b * in;
    for (std::size_t k = 0; k < out_n; ++k) {
      const double g = gr[k];
      grads.bias[k] += g;
      const double* wr = weight.data() + k * in;
      double* wg = grads.weight.data() + k * in;
      for (std::size_t d = 0; d < in; ++d) {
        ir[d] += g * wr[d];
        wg[d] += g * xr[d];
      }
    }
  }
  return grads;
}

struct DropoutResult {
  Tensor output;
  Tensor mask;  // per-element multiplier: 0 or 1/(1-rate)
};

/// Training mode zeroes each unit with probability `rate` and scales the
/// survivors by 1/(1-rate); inference mode is the identity.
inline DropoutResult dropout_forward(const Tensor& x, double rate,
                                     bool training, Rng* rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout_forward: rate must be in [0, 1)");
  }
  DropoutResult r{Tensor::zeros(x.shape()), Tensor::zeros(x.shape())};
  if (!training || rate == 0.0) {
    r.output = x;
    for (std::size_t i = 0; i < x.size(); ++i) r.mask[i] = 1.0;
    return r;
  }
  if (rng == nullptr) {
    throw std::invalid_argument("dropout_forward: training mode needs an RNG");
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng->unit() < rate ? 0.0 : keep_scale;
    r.mask[i] = m;
    r.output[i] = x[i] * m;
  }
  return r;
}

inline Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out) {
  return mul(mask, grad_out);
}

// ---------------------------------------------------------------------------
// Softmax and fused softmax cross-entropy
// ---------------------------------------------------------------------------

/// Row-wise softmax of a (N, K) tensor, numerically stabilized.
inline Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("softmax_rows: expected rank-2 logits");
  }
  const std::size_t batch = logits.extent(0), classes = logits.extent(1);
  Tensor probs = Tensor::zeros(logits.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * classes;
    double* p = probs.data() + b * classes;
    double zmax = z[0];
    for (std::size_t k = 1; k < classes; ++k) zmax = std::max(zmax, z[k]);
    double total = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      p[k] = std::exp(z[k] - zmax);
      total += p[k];
    }
    for (std::size_t k = 0; k < classes; ++k) p[k] /= total;
  }
  return probs;
}

struct LossResult {
  double loss;  // mean over the batch
  Tensor grad;  // d loss / d logits
};

inline LossResult softmax_cross_entropy(const Tensor& logits,
                                        const std::vector<int>& labels) {
  if (logits.rank() != 2 || logits.extent(0) != labels.size()) {
    throw std::invalid_argument("softmax_cross_entropy: logits/labels mismatch");
  }
  const std::size_t batch = logits.extent(0), classes = logits.extent(1);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw std::invalid_argument("softmax_cross_entropy: label " +
                                  std::to_string(label) + " out of range for " +
                                  std::to_string(classes) + " classes");
    }
  }
  Tensor grad = softmax_rows(logits);
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double* g = grad.data() + b * classes;
    const std::size_t label = static_cast<std::size_t>(labels[b]);
    total -= std::log(std::max(g[label], 1e-300));
    g[label] -= 1.0;
    for (std::size_t k = 0; k < classes; ++k) g[k] *= inv_batch;
  }
  return {total * inv_batch, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

enum class PoolKind { max, average, regularized };

inline const char* to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::max: return "max";
    case PoolKind::average: return "avg";
    case PoolKind::regularized: return "regularized";
  }
  return "?";
}

inline PoolKind pool_kind_from_string(const std::string& s) {
  if (s == "max") return PoolKind::max;
  if (s == "avg" || s == "average") return PoolKind::average;
  if (s == "regularized" || s == "reg") return PoolKind::regularized;
  throw std::invalid_argument("unknown pooling kind '" + s +
                              "' (expected max, avg, or regularized)");
}

struct LayerDescriptor {
  enum class Kind { conv, relu, pool, dropout, flatten, fully_connected, softmax };

  Kind kind = Kind::relu;
  // conv
  std::size_t out_channels = 0, kernel = 0, stride = 1, pad = 0;
  // pool
  PoolKind pool_kind = PoolKind::max;
  PoolConfig pool;
  // dropout
  double rate = 0.0;
  // fully connected
  std::size_t out_features = 0;

  static LayerDescriptor Conv(std::size_t out_channels, std::size_t kernel,
                              std::size_t stride = 1, std::size_t pad = 0) {
    LayerDescriptor d;
    d.kind = Kind::conv;
    d.out_channels = out_channels;
    d.kernel = kernel;
    d.stride = stride;
    d.pad = pad;
    return d;
  }
  static LayerDescriptor Relu() {
    LayerDescriptor d;
    d.kind = Kind::relu;
    return d;
  }
  static LayerDescriptor Pool(PoolKind kind, PoolConfig cfg) {
    LayerDescriptor d;
    d.kind = Kind::pool;
    d.pool_kind = kind;
    d.pool = cfg;
    return d;
  }
  static LayerDescriptor Dropout(double rate) {
    LayerDescriptor d;
    d.kind = Kind::dropout;
    d.rate = rate;
    return d;
  }
  static LayerDescriptor Flatten() {
    LayerDescriptor d;
    d.kind = Kind::flatten;
    return d;
  }
  static LayerDescriptor FullyConnected(std::size_t out_features) {
    LayerDescriptor d;
    d.kind = Kind::fully_connected;
    d.out_features = out_features;
    return d;
  }
  static LayerDescriptor Softmax() {
    LayerDescriptor d;
    d.kind = Kind::softmax;
    return d;
  }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training, Rng* rng) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  virtual std::vector<Tensor*> grads() { return {}; }
  virtual std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const = 0;
  virtual const char* name() const = 0;
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(std::size_t in_channels, std::size_t out_channels,
            std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng)
      : stride_(stride),
        pad_(pad),
        weight_(Tensor::zeros({out_channels, in_channels, kernel, kernel})),
        bias_(Tensor::zeros({out_channels})),
        weight_grad_(Tensor::zeros(weight_.shape())),
        bias_grad_(Tensor::zeros(bias_.shape())) {
    const double stddev =
        std::sqrt(2.0 / static_cast<double>(in_channels * kernel * kernel));
    for (std::size_t i = 0; i < weight_.size(); ++i) {
      weight_[i] = rng.normal(0.0, stddev);
    }
  }

  Tensor forward(const Tensor& x, bool, Rng*) override {
    input_ = x;
    return conv2d_forward(x, weight_, bias_, stride_, pad_);
  }

  Tensor backward(const Tensor& grad_out) override {
    Conv2dGrads g = conv2d_backward(input_, weight_, grad_out, stride_, pad_);
    weight_grad_ = std::move(g.weight);
    bias_grad_ = std::move(g.bias);
    return std::move(g.input);
  }

  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&weight_grad_, &bias_grad_}; }

  std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const override {
    if (in.size() != 3 || in[0] != weight_.extent(1)) {
      throw std::invalid_argument("conv layer: incompatible input shape");
    }
    return {weight_.extent(0),
            detail::conv_out_extent(in[1], weight_.extent(2), stride_, pad_, "conv layer"),
            detail::conv_out_extent(in[2], weight_.extent(2), stride_, pad_, "conv layer")};
  }
  const char* name() const override { return "conv"; }

 private:
  std::size_t stride_, pad_;
  Tensor weight_, bias_, weight_grad_, bias_grad_;
  Tensor input_;
};

class ReluLayer final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool, Rng*) override {
    input_ = x;
    return relu_forward(x);
  }
  Tensor backward(const Tensor& grad_out) override {
    return relu_backward(input_, grad_out);
  }
  std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }
  const char* name() const override { return "relu"; }

 private:
  Tensor input_;
};

class PoolLayer final : public Layer {
 public:
  PoolLayer(PoolKind kind, PoolConfig cfg) : kind_(kind), cfg_(cfg) {
    cfg_.validate();
  }

  Tensor forward(const Tensor& x, bool, Rng*) override {
    in_shape_ = {x.extent(0), x.extent(1), x.extent(2), x.extent(3)};
    switch (kind_) {
      case PoolKind::max: {
        PoolResult r = max_pool_forward(x, cfg_);
        record_ = std::move(r.record);
        return std::move(r.values);
      }
      case PoolKind::regularized: {
        PoolResult r = regularized_pool_forward(x, cfg_);
        record_ = std::move(r.record);
        return std::move(r.values);
      }
      case PoolKind::average:
        return avg_pool_forward(x, cfg_);
    }
    throw std::logic_error("unreachable");
  }

  Tensor backward(const Tensor& grad_out) override {
    switch (kind_) {
      case PoolKind::max:
        return max_pool_backward(grad_out, record_);
      case PoolKind::regularized:
        return regularized_pool_backward(grad_out, record_);
      case PoolKind::average:
        return avg_pool_backward(grad_out, cfg_, in_shape_);
    }
    throw std::logic_error("unreachable");
  }

  std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const override {
    if (in.size() != 3) {
      throw std::invalid_argument("pool layer: incompatible input shape");
    }
    const auto [oh, ow] = output_dims(in[1], in[2], cfg_);
    return {in[0], oh, ow};
  }
  const char* name() const override { return "pool"; }

  PoolKind kind() const { return kind_; }
  const PoolConfig& config() const { return cfg_; }

 private:
  PoolKind kind_;
  PoolConfig cfg_;
  GatherRecord record_;
  std::array<std::size_t, 4> in_shape_{};
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {
    if (rate_ < 0.0 || rate_ >= 1.0) {
      throw std::invalid_argument("dropout layer: rate must be in [0, 1)");
    }
  }

  Tensor forward(const Tensor& x, bool training, Rng* rng) override {
    DropoutResult r = dropout_forward(x, rate_, training, rng);
    mask_ = std::move(r.mask);
    return std::move(r.output);
  }
  Tensor backward(const Tensor& grad_out) override {
    return dropout_backward(mask_, grad_out);
  }
  std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }
  const char* name() const override { return "dropout"; }

 private:
  double rate_;
  Tensor mask_;
};

class FlattenLayer final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool, Rng*) override {
    in_shape_ = x.shape();
    Tensor out = x;
    std::size_t per_sample = 1;
    for (std::size_t a = 1; a < x.rank(); ++a) per_sample *= x.extent(a);
    return Tensor::from({x.extent(0), per_sample}, std::move(out.values()));
  }
  Tensor backward(const Tensor& grad_out) override {
    Tensor g = grad_out;
    return Tensor::from(in_shape_, std::move(g.values()));
  }
  std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const override {
    std::size_t total = 1;
    for (std::size_t e : in) total *= e;
    return {total};
  }
  const char* name() const override { return "flatten"; }

 private:
  std::vector<std::size_t> in_shape_;
};

class FullyConnectedLayer final : public Layer {
 public:
  FullyConnectedLayer(std::size_t in_features, std::size_t out_features,
                      Rng& rng)
      : weight_(Tensor::zeros({out_features, in_features})),
        bias_(Tensor::zeros({out_features})),
        weight_grad_(Tensor::zeros(weight_.shape())),
        bias_grad_(Tensor::zeros(bias_.shape())) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_features));
    for (std::size_t i = 0; i < weight_.size(); ++i) {
      weight_[i] = rng.normal(0.0, stddev);
    }
  }

  Tensor forward(const Tensor& x, bool, Rng*) override {
    input_ = x;
    return fc_forward(x, weight_, bias_);
  }
  Tensor backward(const Tensor& grad_out) override {
    FcGrads g = fc_backward(input_, weight_, grad_out);
    weight_grad_ = std::move(g.weight);
    bias_grad_ = std::move(g.bias);
    return std::move(g.input);
  }
  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }
  std::vector<Tensor*> grads() override { return {&weight_grad_, &bias_grad_}; }
  std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const override {
    if (in.size() != 1 || in[0] != weight_.extent(1)) {
      throw std::invalid_argument("fully-connected layer: incompatible input shape");
    }
    return {weight_.extent(0)};
  }
  const char* name() const override { return "fc"; }

 private:
  Tensor weight_, bias_, weight_grad_, bias_grad_;
  Tensor input_;
};

class SoftmaxLayer final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool, Rng*) override {
    output_ = softmax_rows(x);
    return output_;
  }
  Tensor backward(const Tensor& grad_out) override {
    require_same_shape(output_, grad_out, "softmax backward");
    const std::size_t batch = output_.extent(0), classes = output_.extent(1);
    Tensor grad_in = Tensor::zeros(output_.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      const double* y = output_.data() + b * classes;
      const double* g = grad_out.data() + b * classes;
      double dot = 0.0;
      for (std::size_t k = 0; k < classes; ++k) dot += y[k] * g[k];
      double* gi = grad_in.data() + b * classes;
      for (std::size_t k = 0; k < classes; ++k) gi[k] = y[k] * (g[k] - dot);
    }
    return grad_in;
  }
  std::vector<std::size_t> output_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }
  const char* name() const override { return "softmax"; }

 private:
  Tensor output_;
};

// ---------------------------------------------------------------------------
// Layer graph
// ---------------------------------------------------------------------------

/// Ordered sequence of layers with their parameters. Shape compatibility is
/// checked once at build time against the declared input (C, H, W); the
/// resulting per-layer output shapes are kept for inspection.
class LayerGraph {
 public:
  static LayerGraph build(const std::vector<LayerDescriptor>& descriptors,
                          const std::vector<std::size_t>& input_chw,
                          Rng& init_rng) {
    if (input_chw.size() != 3) {
      throw std::invalid_argument("LayerGraph::build: input shape must be (C, H, W)");
    }
    LayerGraph graph;
    std::vector<std::size_t> shape = input_chw;
    for (const LayerDescriptor& d : descriptors) {
      std::unique_ptr<Layer> layer;
      switch (d.kind) {
        case LayerDescriptor::Kind::conv:
          if (shape.size() != 3) {
            throw std::invalid_argument("LayerGraph::build: conv after flatten");
          }
          layer = std::make_unique<ConvLayer>(shape[0], d.out_channels,
                                              d.kernel, d.stride, d.pad,
                                              init_rng);
          break;
        case LayerDescriptor::Kind::relu:
          layer = std::make_unique<ReluLayer>();
          break;
        case LayerDescriptor::Kind::pool:
          layer = std::make_unique<PoolLayer>(d.pool_kind, d.pool);
          break;
        case LayerDescriptor::Kind::dropout:
          layer = std::make_unique<DropoutLayer>(d.rate);
          break;
        case LayerDescriptor::Kind::flatten:
          layer = std::make_unique<FlattenLayer>();
          break;
        case LayerDescriptor::Kind::fully_connected:
          if (shape.size() != 1) {
            throw std::invalid_argument("LayerGraph::build: fully-connected layer needs flattened input");
          }
          layer = std::make_unique<FullyConnectedLayer>(shape[0],
                                                        d.out_features,
                                                        init_rng);
          break;
        case LayerDescriptor::Kind::softmax:
          layer = std::make_unique<SoftmaxLayer>();
          break;
      }
      shape = layer->output_shape(shape);  // throws on incompatible chain
      graph.shapes_.push_back(shape);
      graph.layers_.push_back(std::move(layer));
      graph.descriptors_.push_back(d);
    }
    graph.input_shape_ = input_chw;
    return graph;
  }

  Tensor forward(const Tensor& batch, bool training, Rng* rng) {
    Tensor x = batch;
    for (auto& layer : layers_) x = layer->forward(x, training, rng);
    return x;
  }

  /// Forward through the first `layer_count` layers only, inference mode.
  Tensor forward_prefix(std::size_t layer_count, const Tensor& batch) {
    if (layer_count > layers_.size()) {
      throw std::invalid_argument("forward_prefix: layer count out of range");
    }
    Tensor x = batch;
    for (std::size_t i = 0; i < layer_count; ++i) {
      x = layers_[i]->forward(x, false, nullptr);
    }
    return x;
  }

  Tensor backward(const Tensor& loss_grad) {
    Tensor g = loss_grad;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = (*it)->backward(g);
    }
    return g;
  }

  std::vector<Tensor*> params() {
    std::vector<Tensor*> out;
    for (auto& layer : layers_) {
      for (Tensor* p : layer->params()) out.push_back(p);
    }
    return out;
  }
  std::vector<Tensor*> grads() {
    std::vector<Tensor*> out;
    for (auto& layer : layers_) {
      for (Tensor* g : layer->grads()) out.push_back(g);
    }
    return out;
  }

  std::size_t layer_count() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  const LayerDescriptor& descriptor(std::size_t i) const {
    return descriptors_.at(i);
  }
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  const std::vector<std::vector<std::size_t>>& layer_output_shapes() const {
    return shapes_;
  }

  /// Index of the first pooling layer, or layer_count() if none.
  std::size_t first_pool_index() const {
    for (std::size_t i = 0; i < descriptors_.size(); ++i) {
      if (descriptors_[i].kind == LayerDescriptor::Kind::pool) return i;
    }
    return layers_.size();
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<LayerDescriptor> descriptors_;
  std::vector<std::vector<std::size_t>> shapes_;
  std::vector<std::size_t> input_shape_;
};

/// VGG-style reference architecture: three conv blocks (two 3x3 convs each,
/// spatial size preserved), a configurable first pooling stage, fixed 2x2 max
/// pooling afterwards, dropout on the classifier input, and a final
/// fully-connected layer. `width_mult` scales the 64/128/256 channel counts
/// for desk-scale runs.
inline std::vector<LayerDescriptor> table_network_descriptors(
    double width_mult, PoolKind pool1_kind, PoolConfig pool1,
    std::size_t num_classes, double dropout_rate = 0.25) {
  if (width_mult <= 0.0) {
    throw std::invalid_argument("table_network_descriptors: width multiplier must be positive");
  }
  auto scaled = [width_mult](std::size_t base) {
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(base * width_mult)));
  };
  PoolConfig pool2{2, 1, 2, Padding::none};
  std::vector<LayerDescriptor> d;
  d.push_back(LayerDescriptor::Conv(scaled(64), 3, 1, 1));
  d.push_back(LayerDescriptor::Relu());
  d.push_back(LayerDescriptor::Conv(scaled(64), 3, 1, 1));
  d.push_back(LayerDescriptor::Relu());
  d.push_back(LayerDescriptor::Pool(pool1_kind, pool1));
  d.push_back(LayerDescriptor::Conv(scaled(128), 3, 1, 1));
  d.push_back(LayerDescriptor::Relu());
  d.push_back(LayerDescriptor::Conv(scaled(128), 3, 1, 1));
  d.push_back(LayerDescriptor::Relu());
  d.push_back(LayerDescriptor::Pool(PoolKind::max, pool2));
  d.push_back(LayerDescriptor::Conv(scaled(256), 3, 1, 1));
  d.push_back(LayerDescriptor::Relu());
  d.push_back(LayerDescriptor::Conv(scaled(256), 3, 1, 1));
  d.push_back(LayerDescriptor::Relu());
  d.push_back(LayerDescriptor::Pool(PoolKind::max, pool2));
  d.push_back(LayerDescriptor::Dropout(dropout_rate));
  d.push_back(LayerDescriptor::Flatten());
  d.push_back(LayerDescriptor::FullyConnected(num_classes));
  return d;
}

}  // namespace regpool
