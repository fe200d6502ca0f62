// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace ssmtta {

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const { return tape().node(id_).value; }

bool Var::requires_grad() const { return tape().node(id_).requires_grad; }

Tape& Var::tape() const {
  if (!tape_) throw TapeError("use of an unbound Var");
  return *tape_;
}

const Tensor& Gradients::operator[](const Var& v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw TapeError("no gradient: node is not a requires_grad leaf");
  return it->second;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, requires_grad, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw TapeError("tape already consumed by backward()");
  Node n{op, std::move(value), {}, nullptr, false, false};
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw TapeError(std::string(op) + ": input belongs to a different tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) {
    if (!backward) throw TapeError(std::string(op) + ": differentiable node without backward rule");
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
  if (consumed_) throw TapeError("backward() called twice on the same tape");
  if (&loss.tape() != this) throw TapeError("loss belongs to a different tape");
  const Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_str(root.value.shape()));
  consumed_ = true;

  std::vector<std::optional<Tensor>> grads(loss.id() + 1);
  grads[loss.id()] = Tensor(root.value.shape(), 1.0);

  std::vector<Tensor*> gin;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !grads[id] || n.is_leaf) continue;
    gin.assign(n.inputs.size(), nullptr);
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const std::size_t in = n.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      gin[i] = &*grads[in];
    }
    n.backward(*grads[id], gin);
    grads[id].reset();
    n.backward = nullptr;
  }

  Gradients out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.is_leaf || !n.requires_grad) continue;
    if (id < grads.size() && grads[id]) {
      out.grads_.emplace(id, std::move(*grads[id]));
    } else {
      out.grads_.emplace(id, Tensor(n.value.shape(), 0.0));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// scalar kernels

namespace scalar {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

double softplus(double x) {
  if (x > 20.0) return x;
  return std::log1p(std::exp(x));
}

double softplus_grad(double x) {
  if (x > 20.0) return 1.0;
  return sigmoid(x);
}

}  // namespace scalar

// ---------------------------------------------------------------------------
// elementwise

namespace {

// True when `small`, with leading 1s stripped, equals a suffix of `big`.
bool broadcastable(const Shape& small, const Shape& big) {
  std::size_t lead = 0;
  while (lead < small.size() && small[lead] == 1) ++lead;
  const std::size_t rest = small.size() - lead;
  if (rest > big.size()) return false;
  return std::equal(small.begin() + lead, small.end(), big.end() - rest);
}

struct BinaryPlan {
  Shape out;
  std::size_t na;
  std::size_t nb;
};

BinaryPlan plan_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {a.shape(), a.size(), b.size()};
  if (a.size() >= b.size() && broadcastable(b.shape(), a.shape())) return {a.shape(), a.size(), b.size()};
  if (b.size() > a.size() && broadcastable(a.shape(), b.shape())) return {b.shape(), a.size(), b.size()};
  throw DimensionError(op, a.shape(), b.shape());
}

template <class Fwd, class Da, class Db>
Var binary(const char* op, const Var& a, const Var& b, Fwd fwd, Da da, Db db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const BinaryPlan plan = plan_binary(op, av, bv);
  Tensor out(plan.out);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % plan.na], bv[i % plan.nb]);
  return a.tape().record(op, std::move(out), {a, b},
                         [a, b, plan, da, db](const Tensor& g, std::span<Tensor* const> gin) {
                           const Tensor& av = a.value();
                           const Tensor& bv = b.value();
                           const std::size_t n = g.size();
                           if (gin[0]) {
                             Tensor& ga = *gin[0];
                             for (std::size_t i = 0; i < n; ++i)
                               ga[i % plan.na] += g[i] * da(av[i % plan.na], bv[i % plan.nb]);
                           }
                           if (gin[1]) {
                             Tensor& gb = *gin[1];
                             for (std::size_t i = 0; i < n; ++i)
                               gb[i % plan.nb] += g[i] * db(av[i % plan.na], bv[i % plan.nb]);
                           }
                         });
}

template <class Fwd, class Deriv>
Var unary(const char* op, const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return a.tape().record(op, std::move(out), {a}, [a, deriv](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& av = a.value();
    Tensor& ga = *gin[0];
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(av[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var add(const Var& a, double b) {
  return unary(
      "add_scalar", a, [b](double x) { return x + b; }, [](double) { return 1.0; });
}

Var mul(const Var& a, double b) {
  return unary(
      "mul_scalar", a, [b](double x) { return x * b; }, [b](double) { return b; });
}

Var neg(const Var& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double) { return -1.0; });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var silu(const Var& a) { return unary("silu", a, scalar::silu, scalar::silu_grad); }

Var softplus(const Var& a) { return unary("softplus", a, scalar::softplus, scalar::softplus_grad); }

// ---------------------------------------------------------------------------
// linear algebra and reductions

namespace {

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) throw DimensionError("matmul", a.shape(), b.shape());
  Tensor c({a.dim(0), b.dim(1)});
  gemm_nn(a.data().data(), b.data().data(), c.data().data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

Var matmul(const Var& a, const Var& b) {
  Tensor c = matmul(a.value(), b.value());
  return a.tape().record("matmul", std::move(c), {a, b}, [a, b](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (gin[0]) {  // dA = dC * B^T
      Tensor& ga = *gin[0];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (gin[1]) {  // dB = A^T * dC
      Tensor& gb = *gin[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [](const Tensor& g, std::span<Tensor* const> gin) {
    const double gv = g[0];
    for (double& v : gin[0]->data()) v += gv;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return mul(sum(a), 1.0 / static_cast<double>(n));
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank("softmax_rows", logits, 2);
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = logits.data().data() + r * cols;
    double* y = p.data().data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  return p;
}

Var softmax_xent(const Var& logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  require_rank("softmax_xent", lv, 2);
  const std::size_t batch = lv.dim(0), classes = lv.dim(1);
  if (classes < 2) throw DimensionError("softmax_xent needs at least 2 classes, got " + shape_str(lv.shape()));
  if (targets.size() != batch) {
    throw DimensionError("softmax_xent: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(lv.shape()));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw std::out_of_range("softmax_xent: target " + std::to_string(t) + " outside [0," +
                              std::to_string(classes) + ")");
    }
  }
  Tensor probs = softmax_rows(lv);
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* x = lv.data().data() + r * classes;
    const double mx = *std::max_element(x, x + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(x[c] - mx);
    loss += -(x[targets[r]] - mx - std::log(z));
  }
  loss /= static_cast<double>(batch);
  std::vector<int> tgt(targets.begin(), targets.end());
  return logits.tape().record(
      "softmax_xent", Tensor::scalar(loss), {logits},
      [probs = std::move(probs), tgt = std::move(tgt), batch, classes](const Tensor& g,
                                                                      std::span<Tensor* const> gin) {
        Tensor& gl = *gin[0];
        const double scale = g[0] / static_cast<double>(batch);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = (static_cast<int>(c) == tgt[r]) ? 1.0 : 0.0;
            gl[r * classes + c] += scale * (probs[r * classes + c] - onehot);
          }
      });
}

Var log_softmax(const Var& logits) {
  const Tensor& lv = logits.value();
  require_rank("log_softmax", lv, 2);
  const std::size_t rows = lv.dim(0), cols = lv.dim(1);
  Tensor out(lv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = lv.data().data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lz;
  }
  Tensor saved = out;
  return logits.tape().record("log_softmax", std::move(out), {logits},
                              [lp = std::move(saved), rows, cols](const Tensor& g, std::span<Tensor* const> gin) {
                                Tensor& gx = *gin[0];
                                for (std::size_t r = 0; r < rows; ++r) {
                                  double gs = 0.0;
                                  for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
                                  for (std::size_t c = 0; c < cols; ++c)
                                    gx[r * cols + c] += g[r * cols + c] - std::exp(lp[r * cols + c]) * gs;
                                }
                              });
}

Var gather_rows(const Var& x, std::span<const std::size_t> index) {
  const Tensor& xv = x.value();
  require_rank("gather_rows", xv, 2);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  Tensor out({index.size(), cols});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw std::out_of_range("gather_rows: row " + std::to_string(index[i]) + " of " +
                                                  std::to_string(rows));
    std::copy_n(xv.data().data() + index[i] * cols, cols, out.data().data() + i * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return x.tape().record("gather_rows", std::move(out), {x},
                         [idx = std::move(idx), cols](const Tensor& g, std::span<Tensor* const> gin) {
                           Tensor& gx = *gin[0];
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < cols; ++c) gx[idx[i] * cols + c] += g[i * cols + c];
                         });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank("slice_cols", xv, 2);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (begin > end || end > cols) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_str(xv.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data().data() + r * cols + begin, w, out.data().data() + r * w);
  return x.tape().record("slice_cols", std::move(out), {x},
                         [rows, cols, begin, w](const Tensor& g, std::span<Tensor* const> gin) {
                           Tensor& gx = *gin[0];
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
                         });
}

Var row_group_mean(const Var& x, std::size_t group) {
  const Tensor& xv = x.value();
  require_rank("row_group_mean", xv, 2);
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (group == 0 || rows % group != 0) {
    throw DimensionError("row_group_mean: " + std::to_string(rows) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t groups = rows / group;
  const double inv = 1.0 / static_cast<double>(group);
  Tensor out({groups, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[(r / group) * cols + c] += xv[r * cols + c] * inv;
  return x.tape().record("row_group_mean", std::move(out), {x},
                         [rows, cols, group, inv](const Tensor& g, std::span<Tensor* const> gin) {
                           Tensor& gx = *gin[0];
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[(r / group) * cols + c] * inv;
                         });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> gin) {
    Tensor& gx = *gin[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace ssmtta
