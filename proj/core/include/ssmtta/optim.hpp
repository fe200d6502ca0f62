// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "ssmtta/gradcheck.hpp"

namespace ssmtta {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created lazily per name and
/// persist across steps, so one instance is one optimization trajectory.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Updates every entry of `params` that has a gradient in `grads`.
  /// Throws DimensionError on a shape mismatch and std::invalid_argument if a
  /// gradient names an unknown parameter.
  void step(TensorMap& params, const TensorMap& grads);

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::size_t steps() const { return t_; }
  const TensorMap& first_moments() const { return m_; }
  const TensorMap& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  TensorMap m_;
  TensorMap v_;
};

}  // namespace ssmtta
