// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ssmtta {

const char* to_string(NormMode mode) {
  return mode == NormMode::batch_stats ? "batch" : "running";
}

NormMode parse_norm_mode(const std::string& s) {
  if (s == "batch") return NormMode::batch_stats;
  if (s == "running") return NormMode::running_stats;
  throw std::invalid_argument("unknown norm mode '" + s + "' (expected batch|running)");
}

Var linear(const Var& x, const Var& w, const std::optional<Var>& b) {
  Var y = matmul(x, w);
  return b ? add(y, *b) : y;
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, NormMode mode, double eps,
               const BatchStats* running, BatchStats* stats_out) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("batch_norm expects [rows, channels], got " + shape_str(xv.shape()));
  const std::size_t rows = xv.dim(0), ch = xv.dim(1);
  if (gamma.value().shape() != Shape{ch}) throw DimensionError("batch_norm gamma", gamma.shape(), Shape{ch});
  if (beta.value().shape() != Shape{ch}) throw DimensionError("batch_norm beta", beta.shape(), Shape{ch});

  Tensor mu({ch}), var({ch});
  if (mode == NormMode::batch_stats) {
    if (rows == 0) throw DimensionError("batch_norm over an empty batch");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) mu[c] += xv[r * ch + c];
    for (std::size_t c = 0; c < ch; ++c) mu[c] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = xv[r * ch + c] - mu[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < ch; ++c) var[c] /= static_cast<double>(rows);
    if (stats_out) *stats_out = BatchStats{mu, var};
  } else {
    if (!running) throw std::invalid_argument("batch_norm: running_stats mode without running statistics");
    mu = running->mean;
    var = running->var;
  }

  Tensor inv_std({ch});
  for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor xhat({rows, ch}), y({rows, ch});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      xhat[i] = (xv[i] - mu[c]) * inv_std[c];
      y[i] = gv[c] * xhat[i] + bv[c];
    }

  const bool batch_mode = mode == NormMode::batch_stats;
  return x.tape().record(
      "batch_norm", std::move(y), {x, gamma, beta},
      [xhat = std::move(xhat), inv_std, gamma, rows, ch, batch_mode](const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& gv = gamma.value();
        if (gin[1] || gin[2]) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ch; ++c) {
              const std::size_t i = r * ch + c;
              if (gin[1]) (*gin[1])[c] += g[i] * xhat[i];
              if (gin[2]) (*gin[2])[c] += g[i];
            }
        }
        if (!gin[0]) return;
        Tensor& gx = *gin[0];
        if (!batch_mode) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ch; ++c) gx[r * ch + c] += g[r * ch + c] * gv[c] * inv_std[c];
          return;
        }
        // dx = inv_std/R * (R*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
        const double n = static_cast<double>(rows);
        std::vector<double> s1(ch, 0.0), s2(ch, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = r * ch + c;
            const double dxh = g[i] * gv[c];
            s1[c] += dxh;
            s2[c] += dxh * xhat[i];
          }
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t i = r * ch + c;
            const double dxh = g[i] * gv[c];
            gx[i] += inv_std[c] / n * (n * dxh - s1[c] - xhat[i] * s2[c]);
          }
      });
}

}  // namespace ssmtta
