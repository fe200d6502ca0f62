// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/ssm.hpp"

#include <cmath>
#include <string>

#include "ssmtta/nn.hpp"

namespace ssmtta {

void SSMCore::validate() const {
  if (a_log.rank() != 2) throw DimensionError("SSMCore.a_log must be [d, N], got " + shape_str(a_log.shape()));
  const std::size_t d = channels(), n = state_dim();
  auto expect = [](const char* what, const Tensor& t, const Shape& s) {
    if (t.shape() != s) throw DimensionError(std::string("SSMCore.") + what, t.shape(), s);
  };
  expect("b_proj", b_proj, {d, n});
  expect("c_proj", c_proj, {d, n});
  expect("dt_weight", dt_weight, {d, d});
  expect("dt_bias", dt_bias, {d});
  expect("d_skip", d_skip, {d});
  if (mode == ScanMode::time_invariant) {
    expect("b_fixed", b_fixed, {n});
    expect("c_fixed", c_fixed, {n});
  }
}

SSMCore SSMCore::random(std::size_t channels, std::size_t state_dim, ScanMode mode, std::mt19937_64& rng) {
  SSMCore core;
  core.mode = mode;
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  std::uniform_real_distribution<double> w(-bound, bound);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  core.a_log = Tensor({channels, state_dim});
  for (std::size_t e = 0; e < channels; ++e)
    for (std::size_t n = 0; n < state_dim; ++n) core.a_log.at(e, n) = std::log(static_cast<double>(n + 1));

  core.b_proj = Tensor({channels, state_dim});
  core.c_proj = Tensor({channels, state_dim});
  core.dt_weight = Tensor({channels, channels});
  for (double& v : core.b_proj.data()) v = w(rng);
  for (double& v : core.c_proj.data()) v = w(rng);
  for (double& v : core.dt_weight.data()) v = w(rng);

  // Δ log-uniform in [1e-3, 1e-1]; bias is the inverse softplus of Δ.
  core.dt_bias = Tensor({channels});
  for (double& v : core.dt_bias.data()) {
    const double dt = std::exp(std::log(1e-3) + unit(rng) * (std::log(1e-1) - std::log(1e-3)));
    v = dt + std::log(-std::expm1(-dt));
  }
  core.d_skip = Tensor({channels}, 1.0);

  if (mode == ScanMode::time_invariant) {
    core.b_fixed = Tensor({state_dim});
    core.c_fixed = Tensor({state_dim});
    for (double& v : core.b_fixed.data()) v = w(rng);
    for (double& v : core.c_fixed.data()) v = w(rng);
  }
  return core;
}

Discretized discretize(const Tensor& a, const Tensor& b, double delta) {
  if (!(delta > 0.0)) throw std::domain_error("discretize: step size must be positive, got " + std::to_string(delta));
  if (a.shape() != b.shape()) throw DimensionError("discretize", a.shape(), b.shape());
  Discretized out{Tensor(a.shape()), Tensor(b.shape())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.a_bar[i] = std::exp(delta * a[i]);
    out.b_bar[i] = delta * b[i];
  }
  return out;
}

void selective_scan_kernel(const ScanView& in, std::span<double> y, std::span<double> h) {
  const std::size_t L = in.length, E = in.channels, N = in.state;
  std::vector<double> state(E * N, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    const double* ut = in.u.data() + t * E;
    const double* dt = in.delta.data() + t * E;
    const double* bt = in.b.data() + t * N;
    const double* ct = in.c.data() + t * N;
    double* yt = y.data() + t * E;
    for (std::size_t e = 0; e < E; ++e) {
      double acc = 0.0;
      double* he = state.data() + e * N;
      const double* ae = in.a.data() + e * N;
      const double du = dt[e] * ut[e];
      for (std::size_t n = 0; n < N; ++n) {
        he[n] = std::exp(dt[e] * ae[n]) * he[n] + bt[n] * du;
        acc += ct[n] * he[n];
      }
      yt[e] = acc + in.d[e] * ut[e];
    }
    if (!h.empty()) std::copy(state.begin(), state.end(), h.begin() + t * E * N);
  }
}

namespace {

struct StepInputs {
  Tensor delta;  // [T, d]
  Tensor b;      // [T, N]
  Tensor c;      // [T, N]
  Tensor a;      // [d, N]
};

StepInputs step_inputs(const SSMCore& core, const Tensor& x) {
  core.validate();
  if (x.rank() != 2 || x.dim(1) != core.channels()) {
    throw DimensionError("scan input", x.shape(), Shape{x.rank() ? x.dim(0) : 0, core.channels()});
  }
  const std::size_t T = x.dim(0), d = core.channels(), N = core.state_dim();
  if (T == 0) throw DimensionError("scan over an empty sequence");
  StepInputs s{Tensor({T, d}), Tensor({T, N}), Tensor({T, N}), Tensor({d, N})};
  for (std::size_t i = 0; i < s.a.size(); ++i) s.a[i] = -std::exp(core.a_log[i]);
  if (core.mode == ScanMode::time_invariant) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t e = 0; e < d; ++e) s.delta.at(t, e) = scalar::softplus(core.dt_bias[e]);
      for (std::size_t n = 0; n < N; ++n) {
        s.b.at(t, n) = core.b_fixed[n];
        s.c.at(t, n) = core.c_fixed[n];
      }
    }
    return s;
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      double z = core.dt_bias[j];
      for (std::size_t e = 0; e < d; ++e) z += x.at(t, e) * core.dt_weight.at(e, j);
      s.delta.at(t, j) = scalar::softplus(z);
    }
    for (std::size_t n = 0; n < N; ++n) {
      double bz = 0.0, cz = 0.0;
      for (std::size_t e = 0; e < d; ++e) {
        bz += x.at(t, e) * core.b_proj.at(e, n);
        cz += x.at(t, e) * core.c_proj.at(e, n);
      }
      s.b.at(t, n) = bz;
      s.c.at(t, n) = cz;
    }
  }
  return s;
}

}  // namespace

ScanResult scan_recurrence(const SSMCore& core, const Tensor& x) {
  const StepInputs s = step_inputs(core, x);
  const std::size_t T = x.dim(0), d = core.channels(), N = core.state_dim();
  ScanResult r{Tensor({T, d}), Tensor({T, d, N})};
  selective_scan_kernel(ScanView{x.data(), s.delta.data(), s.a.data(), s.b.data(), s.c.data(), core.d_skip.data(), T,
                                 d, N},
                        r.y.data(), r.states.data());
  return r;
}

Tensor conv_kernel(const SSMCore& core, std::size_t length) {
  if (core.mode != ScanMode::time_invariant) throw ModeError("conv_kernel requires a time-invariant core");
  core.validate();
  if (length == 0) throw DimensionError("conv_kernel length must be >= 1");
  const std::size_t d = core.channels(), N = core.state_dim();
  Tensor k({length, d});
  for (std::size_t e = 0; e < d; ++e) {
    const double delta = scalar::softplus(core.dt_bias[e]);
    Tensor a({N});
    for (std::size_t n = 0; n < N; ++n) a[n] = -std::exp(core.a_log.at(e, n));
    const Discretized z = discretize(a, core.b_fixed, delta);
    // power[n] = Ā_n^l, advanced once per lag
    std::vector<double> power(N, 1.0);
    for (std::size_t l = 0; l < length; ++l) {
      double v = 0.0;
      for (std::size_t n = 0; n < N; ++n) v += core.c_fixed[n] * power[n] * z.b_bar[n];
      k.at(l, e) = v;
      for (std::size_t n = 0; n < N; ++n) power[n] *= z.a_bar[n];
    }
  }
  return k;
}

Tensor causal_conv(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 2 || kernel.rank() != 2 || x.dim(1) != kernel.dim(1)) {
    throw DimensionError("causal_conv", x.shape(), kernel.shape());
  }
  const std::size_t T = x.dim(0), d = x.dim(1), L = kernel.dim(0);
  Tensor y({T, d});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t e = 0; e < d; ++e) {
      double acc = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        const std::size_t lag = t - s;
        if (lag < L) acc += kernel.at(lag, e) * x.at(s, e);
      }
      y.at(t, e) = acc;
    }
  return y;
}

std::optional<std::size_t> artifact_divergence(const SSMCore& core, const Tensor& x, std::size_t t_eps,
                                               const Tensor& eps) {
  if (x.rank() != 2) throw DimensionError("artifact_divergence input must be [T, d], got " + shape_str(x.shape()));
  const std::size_t T = x.dim(0), d = x.dim(1);
  if (t_eps < 1 || t_eps > T) throw std::out_of_range("artifact_divergence: t_eps outside [1, T]");
  if (eps.shape() != Shape{d}) throw DimensionError("artifact_divergence eps", eps.shape(), Shape{d});

  Tensor perturbed = x;
  for (std::size_t e = 0; e < d; ++e) perturbed.at(t_eps - 1, e) += eps[e];
  return divergence_onset(core, x, perturbed);
}

std::optional<std::size_t> divergence_onset(const SSMCore& core, const Tensor& clean, const Tensor& perturbed) {
  if (clean.shape() != perturbed.shape()) throw DimensionError("divergence_onset", clean.shape(), perturbed.shape());
  const ScanResult a = scan_recurrence(core, clean);
  const ScanResult b = scan_recurrence(core, perturbed);
  const std::size_t T = clean.dim(0);
  const std::size_t per_step = a.states.size() / T;
  for (std::size_t t = 0; t < T; ++t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < per_step; ++i) {
      const double diff = b.states[t * per_step + i] - a.states[t * per_step + i];
      sq += diff * diff;
    }
    if (std::sqrt(sq) > 1e-12) return t + 1;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// taped path

Var selective_scan(const Var& u, const Var& delta, const Var& a, const Var& b, const Var& c, const Var& d,
                   std::size_t seq_len) {
  const Tensor& uv = u.value();
  if (uv.rank() != 2) throw DimensionError("selective_scan u must be [rows, E], got " + shape_str(uv.shape()));
  const std::size_t rows = uv.dim(0), E = uv.dim(1);
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.dim(0) != E) throw DimensionError("selective_scan A", av.shape(), Shape{E, 0});
  const std::size_t N = av.dim(1);
  if (delta.value().shape() != uv.shape()) throw DimensionError("selective_scan delta", delta.shape(), uv.shape());
  if (b.value().shape() != Shape{rows, N}) throw DimensionError("selective_scan B", b.shape(), Shape{rows, N});
  if (c.value().shape() != Shape{rows, N}) throw DimensionError("selective_scan C", c.shape(), Shape{rows, N});
  if (d.value().shape() != Shape{E}) throw DimensionError("selective_scan D", d.shape(), Shape{E});
  if (seq_len == 0 || rows % seq_len != 0) {
    throw DimensionError("selective_scan: " + std::to_string(rows) + " rows not divisible by sequence length " +
                         std::to_string(seq_len));
  }
  const std::size_t L = seq_len, S = rows / L;

  Tensor y({rows, E});
  Tensor h({rows, E, N});
  auto sub = [](const Tensor& t, std::size_t off, std::size_t n) { return t.data().subspan(off, n); };
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t r0 = s * L;
    selective_scan_kernel(ScanView{sub(uv, r0 * E, L * E), sub(delta.value(), r0 * E, L * E), av.data(),
                                   sub(b.value(), r0 * N, L * N), sub(c.value(), r0 * N, L * N), d.value().data(), L,
                                   E, N},
                          y.data().subspan(r0 * E, L * E), h.data().subspan(r0 * E * N, L * E * N));
  }

  return u.tape().record(
      "selective_scan", std::move(y), {u, delta, a, b, c, d},
      [u, delta, a, b, c, d, h = std::move(h), L, S, E, N](const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& uv = u.value();
        const Tensor& dv = delta.value();
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        const Tensor& cv = c.value();
        const Tensor& skip = d.value();
        Tensor* gu = gin[0];
        Tensor* gdelta = gin[1];
        Tensor* ga = gin[2];
        Tensor* gb = gin[3];
        Tensor* gc = gin[4];
        Tensor* gd = gin[5];
        std::vector<double> carry(E * N);
        for (std::size_t s = 0; s < S; ++s) {
          std::fill(carry.begin(), carry.end(), 0.0);
          for (std::size_t t = L; t-- > 0;) {
            const std::size_t row = s * L + t;
            for (std::size_t e = 0; e < E; ++e) {
              const std::size_t ie = row * E + e;
              const double gy = g[ie];
              const double ue = uv[ie];
              const double de = dv[ie];
              if (gd) (*gd)[e] += gy * ue;
              if (gu) (*gu)[ie] += gy * skip[e];
              double gdel = 0.0, gue = 0.0;
              for (std::size_t n = 0; n < N; ++n) {
                const std::size_t hn = ie * N + n;
                const double ht = h[hn];
                const double hprev = t > 0 ? h[hn - E * N] : 0.0;
                const double aen = av[e * N + n];
                const double abar = std::exp(de * aen);
                const double bn = bv[row * N + n];
                const double gh = carry[e * N + n] + gy * cv[row * N + n];
                if (gc) (*gc)[row * N + n] += gy * ht;
                const double gabar = gh * hprev;
                gdel += gabar * aen * abar + gh * bn * ue;
                if (ga) (*ga)[e * N + n] += gabar * de * abar;
                if (gb) (*gb)[row * N + n] += gh * de * ue;
                gue += gh * de * bn;
                carry[e * N + n] = abar * gh;
              }
              if (gdelta) (*gdelta)[ie] += gdel;
              if (gu) (*gu)[ie] += gue;
            }
          }
        }
      });
}

Var ssm_branch(const Var& u, const CoreVars& core, std::size_t seq_len) {
  Var delta = softplus(linear(u, core.dt_weight, core.dt_bias));
  Var b = matmul(u, core.b_proj);
  Var c = matmul(u, core.c_proj);
  Var a = neg(exp(core.a_log));
  return selective_scan(u, delta, a, b, c, core.d_skip, seq_len);
}

CoreVars core_constants(Tape& tape, const SSMCore& core) {
  return CoreVars{tape.constant(core.a_log),     tape.constant(core.b_proj),  tape.constant(core.c_proj),
                  tape.constant(core.dt_weight), tape.constant(core.dt_bias), tape.constant(core.d_skip)};
}

}  // namespace ssmtta
