// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ssmtta {

void Adam::step(TensorMap& params, const TensorMap& grads) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("Adam: gradient for unknown parameter '" + name + "'");
    if (it->second.shape() != g.shape()) throw DimensionError("Adam " + name, it->second.shape(), g.shape());
  }
  ++t_;
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [mit, _m] = m_.try_emplace(name, Tensor(g.shape(), 0.0));
    auto [vit, _v] = v_.try_emplace(name, Tensor(g.shape(), 0.0));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
}

}  // namespace ssmtta
