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

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "regpool/tensor.hpp"

namespace regpool {

struct OptimizerSpec {
  enum class Kind { sgd, adam };

  Kind kind = Kind::sgd;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;

  void validate() const {
    if (learning_rate <= 0.0) {
      throw std::invalid_argument("OptimizerSpec: learning rate must be positive");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw std::invalid_argument("OptimizerSpec: betas must lie in [0, 1)");
    }
  }

  static OptimizerSpec sgd(double lr) { return {Kind::sgd, lr, 0.0, 0.0, 0.0}; }
  static OptimizerSpec adam(double lr, double b1 = 0.9, double b2 = 0.99,
                            double eps = 1e-8) {
    return {Kind::adam, lr, b1, b2, eps};
  }
};

inline void sgd_step(Tensor& param, const Tensor& grad, double lr) {
  require_same_shape(param, grad, "sgd_step");
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

struct AdamState {
  Tensor first_moment;
  Tensor second_moment;
};

/// Bias-corrected Adam update; `step` counts from 1.
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
                      const OptimizerSpec& spec, std::size_t step) {
  require_same_shape(param, grad, "adam_step");
  if (state.first_moment.size() == 0) {
    state.first_moment = Tensor::zeros(param.shape());
    state.second_moment = Tensor::zeros(param.shape());
  }
  require_same_shape(param, state.first_moment, "adam_step state");
  const double b1 = spec.beta1, b2 = spec.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * grad[i];
    v = b2 * v + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m / corr1;
    const double v_hat = v / corr2;
    param[i] -= spec.learning_rate * m_hat / (std::sqrt(v_hat) + spec.epsilon);
  }
}

/// Applies the configured update rule to a parameter list; Adam moment
/// buffers are kept per parameter, keyed by position.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec) : spec_(spec) { spec_.validate(); }

  void step(const std::vector<Tensor*>& params,
            const std::vector<Tensor*>& grads) {
    if (params.size() != grads.size()) {
      throw std::invalid_argument("Optimizer::step: parameter/gradient count mismatch");
    }
    ++step_count_;
    if (spec_.kind == OptimizerSpec::Kind::sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        sgd_step(*params[i], *grads[i], spec_.learning_rate);
      }
      return;
    }
    if (states_.size() != params.size()) states_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_step(*params[i], *grads[i], states_[i], spec_, step_count_);
    }
  }

  const OptimizerSpec& spec() const { return spec_; }
  std::size_t step_count() const { return step_count_; }

 private:
  OptimizerSpec spec_;
  std::vector<AdamState> states_;
  std::size_t step_count_ = 0;
};

}  // namespace regpool
