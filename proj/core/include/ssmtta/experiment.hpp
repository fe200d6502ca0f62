// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment cells: regenerate the target split, corrupt and batch it, run a
// method, and sweep one configuration axis over several stream seeds.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssmtta/adaptation.hpp"
#include "ssmtta/data.hpp"

namespace ssmtta {

struct ExperimentConfig {
  std::string checkpoint;  // path, echoed for reproduction
  std::uint64_t data_seed = 0;
  std::size_t data_samples = 2400;
  CorruptionKind corruption = CorruptionKind::gaussian_noise;
  int severity = 3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;  // stream order and corruption noise
  /// "all" (24 permutations), "identity", or a comma list such as "abcd,badc".
  std::string pool = "all";
  /// Calibration images for the ranking: "target" (corrupted) or "clean".
  std::string ranking_source = "target";
  AdaptationConfig adapt;
};

std::vector<Permutation> parse_pool(const std::string& spec);

/// Shuffles `test` with `seed`, corrupts it and cuts it into batches of
/// `batch_size`; a trailing batch smaller than two samples is dropped.
std::vector<LabeledImages> build_stream(const LabeledImages& test, CorruptionKind kind, int severity,
                                        std::size_t batch_size, std::uint64_t seed);

struct ExperimentRun {
  ExperimentConfig config;
  RunResult result;
};

/// Regenerates the dataset from the config and runs one cell.
ExperimentRun run_experiment(const Checkpoint& checkpoint, const ExperimentConfig& config);

enum class SweepAxis { k, iters, batch, polarity, eval_perm, aggregation };
const char* to_string(SweepAxis a);
SweepAxis parse_axis(const std::string& s);

/// Axis values in sweep order, as strings.
std::vector<std::string> sweep_values(SweepAxis axis);

struct SweepRow {
  std::string axis;
  std::string value;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::size_t correct = 0;

  double accuracy() const { return samples ? static_cast<double>(correct) / static_cast<double>(samples) : 0.0; }
};

/// One row per (value, seed). `base.seed` is replaced by each entry of `seeds`.
std::vector<SweepRow> run_sweep(const Checkpoint& checkpoint, const ExperimentConfig& base, SweepAxis axis,
                                const std::vector<std::uint64_t>& seeds);

/// Mean accuracy over seeds per axis value, in sweep order.
std::vector<std::pair<std::string, double>> sweep_means(const std::vector<SweepRow>& rows);

}  // namespace ssmtta
