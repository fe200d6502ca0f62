// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Diagonal state-space primitive.
//
//   h(t) = Ā(t) ⊙ h(t-1) + B̄(t) x(t),   y(t) = C(t)·h(t) + D x(t),   h(0) = 0
//   Ā = exp(Δ A),  B̄ = Δ B,  A = -exp(A_log)
//
// Each of the d input channels carries its own N-dimensional state. In
// selective mode Δ, B and C are computed per step from x(t); in time-invariant
// mode they are fixed and the scan equals a causal convolution with
// K̄ = (C B̄, C Ā B̄, ..., C Ā^{L-1} B̄).

#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>

#include "ssmtta/autodiff.hpp"

namespace ssmtta {

enum class ScanMode { selective, time_invariant };

class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// One branch of learnable SSM parameters over `d` channels, state size N.
struct SSMCore {
  Tensor a_log;      // [d, N]
  Tensor b_proj;     // [d, N]   B(t) = x(t) · b_proj
  Tensor c_proj;     // [d, N]   C(t) = x(t) · c_proj
  Tensor dt_weight;  // [d, d]   Δ(t) = softplus(x(t) · dt_weight + dt_bias)
  Tensor dt_bias;    // [d]
  Tensor d_skip;     // [d]
  ScanMode mode = ScanMode::selective;
  // Time-invariant mode only: Δ = softplus(dt_bias), B = b_fixed, C = c_fixed.
  Tensor b_fixed;  // [N]
  Tensor c_fixed;  // [N]

  std::size_t channels() const { return a_log.dim(0); }
  std::size_t state_dim() const { return a_log.dim(1); }

  /// Throws DimensionError on inconsistent extents.
  void validate() const;

  /// Mamba-style initialisation: A = -(1..N), Δ log-uniform in [1e-3, 1e-1].
  static SSMCore random(std::size_t channels, std::size_t state_dim, ScanMode mode, std::mt19937_64& rng);
};

struct Discretized {
  Tensor a_bar;  // [N]
  Tensor b_bar;  // [N]
};

/// Zero-order hold with the first-order input term: Ā = exp(Δ A), B̄ = Δ B.
/// Throws std::domain_error unless Δ > 0.
Discretized discretize(const Tensor& a, const Tensor& b, double delta);

struct ScanResult {
  Tensor y;       // [T, d]
  Tensor states;  // [T, d, N], h(1) .. h(T)
};

/// Sequential evaluation over x[T, d].
ScanResult scan_recurrence(const SSMCore& core, const Tensor& x);

/// Per-channel kernel K̄[l, e] = Σ_n C_n Ā_{e,n}^l B̄_{e,n} for l < L.
/// Throws ModeError for a selective core.
Tensor conv_kernel(const SSMCore& core, std::size_t length);

/// y[t, e] = Σ_{s<=t} K̄[t-s, e] x[s, e]
Tensor causal_conv(const Tensor& x, const Tensor& kernel);

/// First 1-based step at which the state trajectories of two inputs differ
/// by more than 1e-12 in L2 norm.
std::optional<std::size_t> divergence_onset(const SSMCore& core, const Tensor& clean, const Tensor& perturbed);

/// Runs the recurrence on x and on x with `eps` added at 1-based step
/// `t_eps`; returns the first 1-based step whose state differs by more than
/// 1e-12 in L2 norm, or nullopt if none does.
std::optional<std::size_t> artifact_divergence(const SSMCore& core, const Tensor& x, std::size_t t_eps,
                                               const Tensor& eps);

// ---------------------------------------------------------------------------
// Raw kernel shared by the plain and taped paths.

struct ScanView {
  std::span<const double> u;      // [L, E]
  std::span<const double> delta;  // [L, E]
  std::span<const double> a;      // [E, N], negative
  std::span<const double> b;      // [L, N]
  std::span<const double> c;      // [L, N]
  std::span<const double> d;      // [E]
  std::size_t length;
  std::size_t channels;
  std::size_t state;
};

/// Writes y[L, E] and, if non-empty, the state trajectory h[L, E, N].
void selective_scan_kernel(const ScanView& in, std::span<double> y, std::span<double> h);

/// Taped selective scan over `rows / seq_len` independent sequences stored
/// back to back. u, delta: [rows, E]; a: [E, N]; b, c: [rows, N]; d: [E].
Var selective_scan(const Var& u, const Var& delta, const Var& a, const Var& b, const Var& c, const Var& d,
                   std::size_t seq_len);

/// Tape leaves for one SSMCore.
struct CoreVars {
  Var a_log, b_proj, c_proj, dt_weight, dt_bias, d_skip;
};

/// Selective branch over u[rows, E]: projections, Δ softplus, A = -exp(A_log),
/// then selective_scan.
Var ssm_branch(const Var& u, const CoreVars& core, std::size_t seq_len);

CoreVars core_constants(Tape& tape, const SSMCore& core);

}  // namespace ssmtta
