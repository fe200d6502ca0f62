// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>

#include "ssmtta/autodiff.hpp"

namespace ssmtta {

using TensorMap = std::map<std::string, Tensor>;

/// Builds a scalar loss on `tape` from the given named leaves.
using TapeLoss = std::function<Var(Tape& tape, const std::map<std::string, Var>& leaves)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// |a - n| / max(|a|, |n|, 1e-6). The floor keeps gradients at the level of
/// central-difference rounding noise from dominating the ratio.
double relative_error(double analytic, double numeric);

/// Compares the tape gradient of `loss` at `params` against central
/// differences (f(θ+ε) - f(θ-ε)) / 2ε, coordinate by coordinate. `stride`
/// samples every stride-th coordinate of each tensor (1 = all).
/// Throws std::domain_error if f evaluates to a non-finite value.
GradCheckReport finite_difference_check(const TapeLoss& loss, const TensorMap& params, double eps = 1e-5,
                                        std::size_t stride = 1);

}  // namespace ssmtta
