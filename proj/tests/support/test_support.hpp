// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "ssmtta/model.hpp"

namespace ssmtta::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline Tensor random_images(std::size_t n, std::mt19937_64& rng, const ModelConfig& c = {}) {
  return random_tensor({n, c.image_size, c.image_size, c.channels}, rng, 0.0, 1.0);
}

/// Small model for fast structural tests.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.embed_dim = 4;
  c.state_dim = 2;
  c.classes = 3;
  return c;
}

}  // namespace ssmtta::testing
