// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serialized run artifacts.
//
// Accuracy CSV (adapt), one row per batch plus a final "all" row:
//   method,mode,exec,corruption,severity,seed,batch,samples,correct,accuracy_pct
// Sweep CSV (ablate), one row per (value, seed) plus a "mean" row per value:
//   axis,value,method,seed,samples,correct,accuracy_pct
// Summary CSV (report):
//   source,key,runs,mean_accuracy_pct
//
// Accuracies are percentages with one decimal.

#pragma once

#include <string>
#include <vector>

#include "ssmtta/experiment.hpp"

namespace ssmtta {

inline constexpr const char* kAccuracyCsvHeader =
    "method,mode,exec,corruption,severity,seed,batch,samples,correct,accuracy_pct";
inline constexpr const char* kSweepCsvHeader = "axis,value,method,seed,samples,correct,accuracy_pct";
inline constexpr const char* kSummaryCsvHeader = "source,key,runs,mean_accuracy_pct";

/// Fraction -> percent string with one decimal ("87.5").
std::string format_pct(double fraction);

std::string config_json(const ExperimentConfig& config);
/// Reads the config echo of a run report (or a bare config object).
/// Throws std::invalid_argument on a missing or malformed field.
ExperimentConfig config_from_json(const std::string& text);

std::string run_report_json(const ExperimentRun& run);
std::string ranking_json(const EntropyRanking& ranking, const ExperimentConfig& config);

std::string accuracy_csv(const ExperimentRun& run);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Aggregates accuracy and sweep CSVs: the "all" rows of accuracy CSVs are
/// grouped by method/corruption/severity, sweep rows by axis=value.
/// Throws std::invalid_argument on an unrecognised header.
std::string summarize_csvs(const std::vector<std::string>& csv_texts);

}  // namespace ssmtta
