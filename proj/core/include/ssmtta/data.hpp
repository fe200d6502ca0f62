// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic 16x16 grayscale source data and the corruption suite.
//
// Classes:
//   0..3  bar at 0, 45, 90, 135 degrees
//   4..5  checkerboard, phase 0 / phase 1
//   6..7  radial gradient, bright centre / dark centre

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ssmtta/model.hpp"

namespace ssmtta {

inline constexpr std::size_t kSyntheticClasses = 8;
inline constexpr std::size_t kSyntheticSize = 16;

struct SyntheticDataset {
  LabeledImages train;
  LabeledImages test;
  std::uint64_t seed = 0;
};

/// n images in total, split 80/20 per class. Throws std::invalid_argument
/// unless n is a positive multiple of 8.
SyntheticDataset gen_dataset(std::uint64_t seed, std::size_t n);

enum class CorruptionKind { gaussian_noise, shot_noise, box_blur, contrast, pixelate };

const char* to_string(CorruptionKind kind);
/// Throws std::invalid_argument on an unknown name.
CorruptionKind parse_corruption(std::string_view name);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 0;
  std::uint64_t seed = 0;
};

/// Per-severity parameter of each kind; index 0 is the identity.
double severity_parameter(CorruptionKind kind, int severity);

/// images: [n, H, W, ch]. Output is clipped to [0, 1]. Severity 0 returns the
/// input unchanged. Throws std::invalid_argument on a severity outside 0..5.
Tensor corrupt(const Tensor& images, const CorruptionSpec& spec);

/// Fraction of positions where predictions match labels.
double prediction_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Accuracy under the default traversal.
double evaluate(const MicroVMamba& model, const LabeledImages& data, NormMode norm, std::size_t batch_size = 64);

}  // namespace ssmtta
