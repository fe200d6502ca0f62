// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "ssmtta/checkpoint.hpp"
#include "ssmtta/optim.hpp"

namespace ssmtta {

struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 3e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Cosine decay of the learning rate to zero over the run.
  bool cosine = true;
};

/// Thrown when the source loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  std::size_t epoch;
  double mean_loss;
};

/// Supervised source training of every parameter under the identity
/// permutation. Norm layers use batch statistics during the step and update
/// their running statistics with the unbiased batch variance. The returned
/// checkpoint records the running-statistics accuracy on `test` as
/// metadata["clean_accuracy"] (when `test` is non-empty) plus the options.
Checkpoint train_source(const LabeledImages& train, const LabeledImages& test, const ModelConfig& config,
                        const TrainOptions& options, const std::function<void(const EpochLog&)>& on_epoch = {});

/// One supervised step on `batch`; returns the loss before the update.
double train_step(MicroVMamba& model, Adam& optimizer, const LabeledImages& batch);

}  // namespace ssmtta
