// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a single-use tape.
//
// A Tape owns every value produced during one forward pass. Leaves are created
// with `leaf()`; operations append nodes whose backward closures accumulate into
// the gradients of their inputs. Nodes whose inputs do not require grad are
// recorded without a closure, so inference passes pay only for the values.
// `backward()` may be called once per tape.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssmtta/tensor.hpp"

namespace ssmtta {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Gradients of a loss with respect to the requires_grad leaves of a tape.
class Gradients {
 public:
  /// Throws TapeError for a Var that is not a requires_grad leaf.
  const Tensor& operator[](const Var& v) const;
  bool contains(const Var& v) const { return grads_.count(v.id()) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

class Tape {
 public:
  /// grad_in[i] is null when input i does not require grad; otherwise it points
  /// at a zero-initialised (or partially accumulated) buffer of the input's shape.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op node. The node requires grad iff any input does; in that
  /// case `backward` must be callable.
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Consumes the tape.
  Gradients backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  friend class Var;
  struct Node {
    const char* op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
    bool is_leaf;
  };
  const Node& node(std::size_t id) const { return nodes_[id]; }

  // deque keeps value references stable as the tape grows
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// Scalar kernels shared by tape ops and plain-tensor code paths.
namespace scalar {
double sigmoid(double x);
double silu(double x);
double silu_grad(double x);
/// ln(1 + e^x), with x itself returned above 20.
double softplus(double x);
double softplus_grad(double x);
}  // namespace scalar

// Elementwise ops. Binary ops accept identical shapes or leading-1
// broadcasting: the smaller operand's shape, with leading 1s stripped, must
// equal a suffix of the larger one's shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add(const Var& a, double b);
Var mul(const Var& a, double b);
Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var silu(const Var& a);
Var softplus(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

/// [m,k] x [k,n] -> [m,n]
Var matmul(const Var& a, const Var& b);

Var sum(const Var& a);
Var mean(const Var& a);

/// Mean over the batch of -log softmax(logits)[target]. logits is [batch, C].
Var softmax_xent(const Var& logits, std::span<const int> targets);
/// Row-wise log-softmax of a [rows, C] matrix.
Var log_softmax(const Var& logits);

/// out[i, :] = x[index[i], :]. Backward scatter-adds.
Var gather_rows(const Var& x, std::span<const std::size_t> index);
/// Columns [begin, end) of a [rows, cols] matrix.
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
/// Mean over consecutive groups of `group` rows: [R, D] -> [R/group, D].
Var row_group_mean(const Var& x, std::size_t group);
Var reshape(const Var& x, Shape shape);

// Plain-tensor helpers used outside of tapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& logits);

}  // namespace ssmtta
