// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssmtta {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const TapeLoss& loss, const TensorMap& params) {
  Tape tape;
  std::map<std::string, Var> leaves;
  for (const auto& [name, t] : params) leaves.emplace(name, tape.constant(t));
  const double v = loss(tape, leaves).value().item();
  if (!std::isfinite(v)) throw std::domain_error("finite_difference_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport finite_difference_check(const TapeLoss& loss, const TensorMap& params, double eps,
                                        std::size_t stride) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
  if (stride == 0) stride = 1;

  TensorMap analytic;
  {
    Tape tape;
    std::map<std::string, Var> leaves;
    for (const auto& [name, t] : params) leaves.emplace(name, tape.leaf(t, true));
    Var l = loss(tape, leaves);
    if (!std::isfinite(l.value().item())) throw std::domain_error("finite_difference_check: loss is not finite");
    Gradients g = tape.backward(l);
    for (const auto& [name, v] : leaves) analytic.emplace(name, g[v]);
  }

  GradCheckReport report;
  TensorMap probe = params;
  for (const auto& [name, t] : params) {
    Tensor& p = probe.at(name);
    for (std::size_t i = 0; i < t.size(); i += stride) {
      const double orig = p[i];
      p[i] = orig + eps;
      const double fp = evaluate(loss, probe);
      p[i] = orig - eps;
      const double fm = evaluate(loss, probe);
      p[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic.at(name)[i];
      const double err = relative_error(a, numeric);
      ++report.coordinates;
      if (report.worst_param.empty() || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace ssmtta
