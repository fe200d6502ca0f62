// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/ss2d.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssmtta {

char to_char(Direction d) { return static_cast<char>('a' + static_cast<int>(d)); }

Permutation::Permutation(std::array<Direction, 4> order) : order_(order) {
  std::array<bool, 4> seen{};
  for (Direction d : order_) {
    const auto i = static_cast<std::size_t>(d);
    if (i >= 4 || seen[i]) throw std::invalid_argument("malformed permutation: directions must be a bijection");
    seen[i] = true;
  }
}

Permutation Permutation::parse(std::string_view s) {
  if (s.size() != 4) throw std::invalid_argument("malformed permutation '" + std::string(s) + "'");
  std::array<Direction, 4> order{};
  for (std::size_t k = 0; k < 4; ++k) {
    if (s[k] < 'a' || s[k] > 'd') throw std::invalid_argument("malformed permutation '" + std::string(s) + "'");
    order[k] = static_cast<Direction>(s[k] - 'a');
  }
  return Permutation(order);
}

const std::vector<Permutation>& Permutation::all() {
  static const std::vector<Permutation> perms = [] {
    std::array<Direction, 4> order{Direction::a, Direction::b, Direction::c, Direction::d};
    std::vector<Permutation> out;
    do {
      out.emplace_back(order);
    } while (std::next_permutation(order.begin(), order.end()));
    return out;
  }();
  return perms;
}

std::string Permutation::str() const {
  std::string s(4, ' ');
  for (std::size_t k = 0; k < 4; ++k) s[k] = to_char(order_[k]);
  return s;
}

ScanMaps ScanMaps::build(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DimensionError("scan maps need a non-empty grid");
  ScanMaps m;
  m.height = height;
  m.width = width;
  const std::size_t T = height * width;
  auto& a = m.order[0];
  auto& b = m.order[1];
  a.reserve(T);
  b.reserve(T);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) a.push_back(r * width + c);
  for (std::size_t c = 0; c < width; ++c)
    for (std::size_t r = 0; r < height; ++r) b.push_back(r * width + c);
  m.order[2].assign(a.rbegin(), a.rend());
  m.order[3].assign(b.rbegin(), b.rend());
  for (std::size_t dir = 0; dir < 4; ++dir) {
    m.time_of[dir].assign(T, 0);
    for (std::size_t t = 0; t < T; ++t) m.time_of[dir][m.order[dir][t]] = t;
  }
  return m;
}

CrossScan cross_scan(const Tensor& grid) {
  if (grid.rank() != 3) throw DimensionError("cross_scan expects [H, W, d], got " + shape_str(grid.shape()));
  const std::size_t H = grid.dim(0), W = grid.dim(1), d = grid.dim(2);
  CrossScan out{{}, ScanMaps::build(H, W)};
  const std::size_t T = H * W;
  for (std::size_t dir = 0; dir < 4; ++dir) {
    Tensor seq({T, d});
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t pos = out.maps.order[dir][t];
      std::copy_n(grid.data().data() + pos * d, d, seq.data().data() + t * d);
    }
    out.sequences[dir] = std::move(seq);
  }
  return out;
}

Tensor unscan(const Tensor& sequence, Direction dir, const ScanMaps& maps) {
  const std::size_t T = maps.length();
  if (sequence.rank() != 2 || sequence.dim(0) != T) {
    throw DimensionError("unscan", sequence.shape(), Shape{T, sequence.rank() == 2 ? sequence.dim(1) : 0});
  }
  const std::size_t d = sequence.dim(1);
  Tensor grid({maps.height, maps.width, d});
  const auto& order = maps.order[static_cast<std::size_t>(dir)];
  for (std::size_t t = 0; t < T; ++t)
    std::copy_n(sequence.data().data() + t * d, d, grid.data().data() + order[t] * d);
  return grid;
}

Tensor cross_merge(const std::array<Tensor, 4>& by_direction, const ScanMaps& maps) {
  Tensor sum = unscan(by_direction[0], Direction::a, maps);
  for (std::size_t dir = 1; dir < 4; ++dir) {
    const Tensor g = unscan(by_direction[dir], static_cast<Direction>(dir), maps);
    if (g.shape() != sum.shape()) throw DimensionError("cross_merge", g.shape(), sum.shape());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
  }
  return sum;
}

SS2DParams SS2DParams::random(std::size_t dim, std::size_t inner, std::size_t state_dim, std::mt19937_64& rng) {
  SS2DParams p;
  for (auto& core : p.cores) core = SSMCore::random(inner, state_dim, ScanMode::selective, rng);
  auto fill = [&rng](Tensor& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.data()) v = u(rng);
  };
  p.in_proj = Tensor({dim, inner});
  p.gate_proj = Tensor({dim, inner});
  p.out_proj = Tensor({inner, dim});
  fill(p.in_proj, dim);
  fill(p.gate_proj, dim);
  fill(p.out_proj, inner);
  return p;
}

SS2DVars ss2d_constants(Tape& tape, const SS2DParams& params) {
  SS2DVars v;
  for (std::size_t k = 0; k < 4; ++k) v.cores[k] = core_constants(tape, params.cores[k]);
  v.in_proj = tape.constant(params.in_proj);
  v.gate_proj = tape.constant(params.gate_proj);
  v.out_proj = tape.constant(params.out_proj);
  return v;
}

Var ss2d_forward(const Var& x, const SS2DVars& params, const Permutation& perm, const ScanMaps& maps) {
  const std::size_t T = maps.length();
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) % T != 0) {
    throw DimensionError("ss2d_forward expects [batch*" + std::to_string(T) + ", D], got " + shape_str(xv.shape()));
  }
  const std::size_t batch = xv.dim(0) / T;

  Var u = silu(matmul(x, params.in_proj));
  Var z = silu(matmul(x, params.gate_proj));

  // Cross-merge sums in direction order, not slot order, so the result does
  // not depend on the routing when the branch cores coincide.
  std::array<std::optional<Var>, 4> by_direction;
  std::vector<std::size_t> to_scan(batch * T), to_grid(batch * T);
  for (std::size_t slot = 0; slot < 4; ++slot) {
    const auto dir = static_cast<std::size_t>(perm[slot]);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        to_scan[b * T + t] = b * T + maps.order[dir][t];
        to_grid[b * T + t] = b * T + maps.time_of[dir][t];
      }
    Var seq = gather_rows(u, to_scan);
    Var y = ssm_branch(seq, params.cores[slot], T);
    by_direction[dir] = gather_rows(y, to_grid);
  }
  Var merged = add(add(add(*by_direction[0], *by_direction[1]), *by_direction[2]), *by_direction[3]);
  return matmul(mul(merged, z), params.out_proj);
}

Tensor ss2d_forward(const Tensor& x, const SS2DParams& params, const Permutation& perm) {
  if (x.rank() != 3) throw DimensionError("ss2d_forward expects [H, W, D], got " + shape_str(x.shape()));
  const ScanMaps maps = ScanMaps::build(x.dim(0), x.dim(1));
  Tape tape;
  Var in = tape.constant(x.reshaped({x.dim(0) * x.dim(1), x.dim(2)}));
  Var out = ss2d_forward(in, ss2d_constants(tape, params), perm, maps);
  return out.value().reshaped({x.dim(0), x.dim(1), out.value().dim(1)});
}

std::array<std::optional<std::size_t>, 4> branch_divergence_onsets(const std::array<SSMCore, 4>& cores,
                                                                   const Tensor& grid, const Permutation& perm,
                                                                   std::size_t pos, const Tensor& eps) {
  if (grid.rank() != 3) throw DimensionError("branch_divergence_onsets expects [H, W, d], got " + shape_str(grid.shape()));
  const std::size_t d = grid.dim(2);
  if (pos >= grid.dim(0) * grid.dim(1)) throw std::out_of_range("grid position outside the grid");
  if (eps.shape() != Shape{d}) throw DimensionError("branch_divergence_onsets eps", eps.shape(), Shape{d});
  Tensor dirty = grid;
  for (std::size_t e = 0; e < d; ++e) dirty[pos * d + e] += eps[e];
  const auto clean_slots = route(perm, cross_scan(grid).sequences);
  const auto dirty_slots = route(perm, cross_scan(dirty).sequences);
  std::array<std::optional<std::size_t>, 4> onsets;
  for (std::size_t k = 0; k < 4; ++k) onsets[k] = divergence_onset(cores[k], clean_slots[k], dirty_slots[k]);
  return onsets;
}

}  // namespace ssmtta
