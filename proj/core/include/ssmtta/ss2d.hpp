// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Four-directional 2-D scan (Cross-Scan / Cross-Merge) and the SS2D block.
//
// Directions over an H x W patch grid:
//   a  row-major           (left to right, rows top to bottom)
//   b  column-major        (top to bottom, columns left to right)
//   c  reverse of a
//   d  reverse of b
//
// A traversal Permutation assigns directions to the four branch parameter
// slots: slot k scans the sequence of direction order[k]. The identity
// (a, b, c, d) is the default VMamba routing.

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "ssmtta/ssm.hpp"

namespace ssmtta {

enum class Direction : std::uint8_t { a = 0, b = 1, c = 2, d = 3 };

char to_char(Direction d);

class Permutation {
 public:
  Permutation() : order_{Direction::a, Direction::b, Direction::c, Direction::d} {}
  /// Throws std::invalid_argument unless `order` is a bijection over {a,b,c,d}.
  explicit Permutation(std::array<Direction, 4> order);

  static Permutation identity() { return Permutation(); }
  /// Parses strings like "abcd" or "cdab".
  static Permutation parse(std::string_view s);
  /// All 24 permutations in lexicographic order; identity first.
  static const std::vector<Permutation>& all();

  Direction operator[](std::size_t slot) const { return order_[slot]; }
  const std::array<Direction, 4>& order() const { return order_; }
  bool is_identity() const { return *this == Permutation(); }
  std::string str() const;

  auto operator<=>(const Permutation&) const = default;

 private:
  std::array<Direction, 4> order_;
};

/// Index maps between grid positions (row-major r*W + c) and scan steps.
struct ScanMaps {
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<std::vector<std::size_t>, 4> order;    // order[dir][t] = grid position visited at step t
  std::array<std::vector<std::size_t>, 4> time_of;  // time_of[dir][pos] = step at which pos is visited

  std::size_t length() const { return height * width; }
  static ScanMaps build(std::size_t height, std::size_t width);
};

struct CrossScan {
  std::array<Tensor, 4> sequences;  // indexed by Direction, each [H*W, d]
  ScanMaps maps;
};

/// grid: [H, W, d]
CrossScan cross_scan(const Tensor& grid);
/// Inverse of one direction's scan: [H*W, d] in step order -> [H, W, d].
Tensor unscan(const Tensor& sequence, Direction dir, const ScanMaps& maps);
/// Sum of the four un-scanned grids.
Tensor cross_merge(const std::array<Tensor, 4>& by_direction, const ScanMaps& maps);

/// slot k receives by_direction[perm[k]].
template <class T>
std::array<T, 4> route(const Permutation& perm, const std::array<T, 4>& by_direction) {
  return {by_direction[static_cast<std::size_t>(perm[0])], by_direction[static_cast<std::size_t>(perm[1])],
          by_direction[static_cast<std::size_t>(perm[2])], by_direction[static_cast<std::size_t>(perm[3])]};
}

struct SS2DParams {
  std::array<SSMCore, 4> cores;  // branch slots 0..3
  Tensor in_proj;                // [D, E]
  Tensor gate_proj;              // [D, E]
  Tensor out_proj;               // [E, D]

  static SS2DParams random(std::size_t dim, std::size_t inner, std::size_t state_dim, std::mt19937_64& rng);
};

struct SS2DVars {
  std::array<CoreVars, 4> cores;
  Var in_proj;
  Var gate_proj;
  Var out_proj;
};

SS2DVars ss2d_constants(Tape& tape, const SS2DParams& params);

/// x: [batch * H * W, D], each image's rows in row-major grid order.
/// silu(x W_in) -> cross-scan -> route -> per-slot selective scan ->
/// un-scan -> sum -> gate with silu(x W_gate) -> W_out. No biases, so a zero
/// input yields a zero output.
Var ss2d_forward(const Var& x, const SS2DVars& params, const Permutation& perm, const ScanMaps& maps);

/// Plain-tensor convenience for a single grid x: [H, W, D].
Tensor ss2d_forward(const Tensor& x, const SS2DParams& params, const Permutation& perm);

/// For a perturbation `eps` added at grid position `pos` of `grid` ([H, W, d]),
/// the 1-based hidden-state divergence onset seen by each branch slot when the
/// directional sequences are routed by `perm`.
std::array<std::optional<std::size_t>, 4> branch_divergence_onsets(const std::array<SSMCore, 4>& cores,
                                                                   const Tensor& grid, const Permutation& perm,
                                                                   std::size_t pos, const Tensor& eps);

}  // namespace ssmtta
