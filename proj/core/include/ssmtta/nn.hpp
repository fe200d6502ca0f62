// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "ssmtta/autodiff.hpp"

namespace ssmtta {

/// Which statistics a batch-norm layer normalises with.
enum class NormMode {
  batch_stats,    // statistics of the current batch (training and test-time adaptation)
  running_stats,  // stored running estimates (clean evaluation)
};

const char* to_string(NormMode mode);
NormMode parse_norm_mode(const std::string& s);

/// x[R, in] * w[in, out] (+ b[out])
Var linear(const Var& x, const Var& w, const std::optional<Var>& b = std::nullopt);

struct BatchStats {
  Tensor mean;
  Tensor var;  // biased
};

/// Per-channel batch normalisation of a [rows, channels] matrix.
/// In batch_stats mode the batch statistics are written to `stats_out` when
/// given; in running_stats mode `running` must be provided.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, NormMode mode, double eps,
               const BatchStats* running = nullptr, BatchStats* stats_out = nullptr);

}  // namespace ssmtta
