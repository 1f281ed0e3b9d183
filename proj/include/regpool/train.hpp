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

// Minibatch training loop and evaluation. Both are deterministic: the only
// randomness (shuffle order, dropout masks) is drawn from the Rng argument.

#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "regpool/nn.hpp"
#include "regpool/optim.hpp"
#include "regpool/rng.hpp"
#include "regpool/tensor.hpp"

namespace regpool {

namespace detail {

inline Tensor gather_batch(const Tensor& images,
                           const std::vector<std::size_t>& order,
                           std::size_t begin, std::size_t end) {
  const std::size_t c = images.extent(1), h = images.extent(2), w = images.extent(3);
  const std::size_t plane = c * h * w;
  Tensor batch = Tensor::zeros({end - begin, c, h, w});
  for (std::size_t i = begin; i < end; ++i) {
    std::copy_n(images.data() + order[i] * plane, plane,
                batch.data() + (i - begin) * plane);
  }
  return batch;
}

inline std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t classes = logits.extent(1);
  std::size_t best = 0;
  for (std::size_t k = 1; k < classes; ++k) {
    if (logits[row * classes + k] > logits[row * classes + best]) best = k;
  }
  return best;
}

}  // namespace detail

struct EpochMetrics {
  double mean_loss = 0.0;  // sample-weighted mean over the epoch
  double accuracy = 0.0;   // train accuracy of the pre-update forward passes
};

/// One epoch of minibatch SGD/Adam with a seeded uniform shuffle. The last
/// batch may be short. Returns loss/accuracy aggregated over all samples.
inline EpochMetrics train_epoch(LayerGraph& graph, const Tensor& images,
                                const std::vector<int>& labels,
                                Optimizer& optimizer, std::size_t batch_size,
                                Rng& rng) {
  if (images.rank() != 4 || images.extent(0) != labels.size()) {
    throw std::invalid_argument("train_epoch: image/label count mismatch");
  }
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch size must be positive");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, n);
    Tensor batch = detail::gather_batch(images, order, begin, end);
    std::vector<int> batch_labels(end - begin);
    for (std::size_t i = begin; i < end; ++i) batch_labels[i - begin] = labels[order[i]];

    Tensor logits = graph.forward(batch, /*training=*/true, &rng);
    LossResult loss = softmax_cross_entropy(logits, batch_labels);
    loss_sum += loss.loss * static_cast<double>(end - begin);
    for (std::size_t i = 0; i < end - begin; ++i) {
      if (detail::argmax_row(logits, i) == static_cast<std::size_t>(batch_labels[i])) ++correct;
    }
    graph.backward(loss.grad);
    optimizer.step(graph.params(), graph.grads());
  }
  return {loss_sum / static_cast<double>(n),
          static_cast<double>(correct) / static_cast<double>(n)};
}

struct EvalResult {
  double mean_loss = 0.0;
  double accuracy = 0.0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> confusion;  // row-major (true class, predicted)

  std::size_t confusion_at(std::size_t truth, std::size_t predicted) const {
    return confusion.at(truth * num_classes + predicted);
  }
};

/// Inference-mode evaluation with a full confusion matrix. Batched only to
/// bound memory; results are independent of batch_size.
inline EvalResult evaluate(LayerGraph& graph, const Tensor& images,
                           const std::vector<int>& labels,
                           std::size_t num_classes,
                           std::size_t batch_size = 100) {
  if (images.rank() != 4 || images.extent(0) != labels.size()) {
    throw std::invalid_argument("evaluate: image/label count mismatch");
  }
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  EvalResult result;
  result.num_classes = num_classes;
  result.confusion.assign(num_classes * num_classes, 0);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, n);
    Tensor batch = detail::gather_batch(images, order, begin, end);
    std::vector<int> batch_labels(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                  labels.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor logits = graph.forward(batch, /*training=*/false, nullptr);
    loss_sum += softmax_cross_entropy(logits, batch_labels).loss *
                static_cast<double>(end - begin);
    for (std::size_t i = 0; i < end - begin; ++i) {
      const std::size_t truth = static_cast<std::size_t>(batch_labels[i]);
      const std::size_t predicted = detail::argmax_row(logits, i);
      ++result.confusion[truth * num_classes + predicted];
      if (predicted == truth) ++correct;
    }
  }
  result.mean_loss = n > 0 ? loss_sum / static_cast<double>(n) : 0.0;
  result.accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  return result;
}

}  // namespace regpool
