// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ssmtta/gradcheck.hpp"
#include "ssmtta/ss2d.hpp"
#include "test_support.hpp"

namespace ssmtta {
namespace {

using testing::random_tensor;

std::vector<double> column(const Tensor& seq) {
  return std::vector<double>(seq.data().begin(), seq.data().end());
}

TEST(CrossScan, TwoByTwoGrid) {
  const CrossScan cs = cross_scan(Tensor({2, 2, 1}, {1, 2, 3, 4}));
  EXPECT_EQ(column(cs.sequences[0]), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(column(cs.sequences[1]), (std::vector<double>{1, 3, 2, 4}));
  EXPECT_EQ(column(cs.sequences[2]), (std::vector<double>{4, 3, 2, 1}));
  EXPECT_EQ(column(cs.sequences[3]), (std::vector<double>{4, 2, 3, 1}));
}

TEST(CrossScan, SingleCell) {
  const CrossScan cs = cross_scan(Tensor({1, 1, 2}, {7, 8}));
  for (const auto& s : cs.sequences) EXPECT_EQ(s, Tensor({1, 2}, {7, 8}));
}

TEST(CrossScan, IndexMapsAreBijections) {
  const ScanMaps m = ScanMaps::build(5, 7);
  for (std::size_t dir = 0; dir < 4; ++dir) {
    std::set<std::size_t> seen(m.order[dir].begin(), m.order[dir].end());
    EXPECT_EQ(seen.size(), 35u);
    for (std::size_t t = 0; t < 35; ++t) EXPECT_EQ(m.time_of[dir][m.order[dir][t]], t);
    for (std::size_t p = 0; p < 35; ++p) EXPECT_EQ(m.order[dir][m.time_of[dir][p]], p);
  }
}

TEST(CrossScan, UnscanInvertsEachDirection) {
  std::mt19937_64 rng(2);
  const Tensor grid = random_tensor({3, 4, 2}, rng);
  const CrossScan cs = cross_scan(grid);
  for (std::size_t dir = 0; dir < 4; ++dir) EXPECT_EQ(unscan(cs.sequences[dir], static_cast<Direction>(dir), cs.maps), grid);
}

TEST(CrossMerge, SumsTheFourUnscannedGrids) {
  std::mt19937_64 rng(3);
  const Tensor grid = random_tensor({3, 3, 2}, rng);
  const CrossScan cs = cross_scan(grid);
  const Tensor merged = cross_merge(cs.sequences, cs.maps);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(merged[i], 4 * grid[i], 1e-15);
}

TEST(Permutation, AllTwentyFourInLexicographicOrder) {
  const auto& all = Permutation::all();
  ASSERT_EQ(all.size(), 24u);
  EXPECT_TRUE(all.front().is_identity());
  EXPECT_EQ(all.front().str(), "abcd");
  EXPECT_EQ(all.back().str(), "dcba");
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1], all[i]);
  std::set<std::string> names;
  for (const auto& p : all) names.insert(p.str());
  EXPECT_EQ(names.size(), 24u);
}

TEST(Permutation, ParseRejectsMalformedInput) {
  EXPECT_THROW(Permutation::parse("abca"), std::invalid_argument);
  EXPECT_THROW(Permutation::parse("abc"), std::invalid_argument);
  EXPECT_THROW(Permutation::parse("abce"), std::invalid_argument);
  EXPECT_THROW(Permutation({Direction::a, Direction::a, Direction::b, Direction::c}), std::invalid_argument);
  EXPECT_EQ(Permutation::parse("badc").str(), "badc");
}

TEST(Route, IdentityRouting) {
  const std::array<int, 4> seqs{10, 11, 12, 13};
  EXPECT_EQ(route(Permutation::identity(), seqs), seqs);
}

TEST(Route, SwappedPairs) {
  const std::array<std::string, 4> seqs{"a", "b", "c", "d"};
  EXPECT_EQ(route(Permutation::parse("badc"), seqs), (std::array<std::string, 4>{"b", "a", "d", "c"}));
}

TEST(Route, InvolutionComposesToIdentity) {
  const std::array<int, 4> seqs{10, 11, 12, 13};
  const Permutation p = Permutation::parse("cdab");
  EXPECT_EQ(route(p, route(p, seqs)), seqs);
}

SS2DParams identical_branches(SS2DParams p) {
  for (std::size_t k = 1; k < 4; ++k) p.cores[k] = p.cores[0];
  return p;
}

TEST(SS2DForward, PreservesGridShape) {
  std::mt19937_64 rng(4);
  const SS2DParams p = SS2DParams::random(3, 3, 2, rng);
  const Tensor out = ss2d_forward(random_tensor({4, 5, 3}, rng), p, Permutation::identity());
  EXPECT_EQ(out.shape(), (Shape{4, 5, 3}));
}

TEST(SS2DForward, IdenticalBranchesAreRoutingInvariant) {
  std::mt19937_64 rng(5);
  const SS2DParams p = identical_branches(SS2DParams::random(4, 4, 3, rng));
  const Tensor x = random_tensor({4, 4, 4}, rng);
  const Tensor ref = ss2d_forward(x, p, Permutation::identity());
  for (const auto& perm : Permutation::all()) EXPECT_EQ(ss2d_forward(x, p, perm), ref) << perm.str();
}

TEST(SS2DForward, DistinctBranchesDependOnRouting) {
  std::mt19937_64 rng(6);
  const SS2DParams p = SS2DParams::random(4, 4, 3, rng);
  const Tensor x = random_tensor({4, 4, 4}, rng);
  EXPECT_GT(max_abs_diff(ss2d_forward(x, p, Permutation::identity()), ss2d_forward(x, p, Permutation::parse("badc"))),
            1e-9);
}

TEST(SS2DForward, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const SS2DParams p = SS2DParams::random(3, 3, 2, rng);
  const Tensor x = random_tensor({2 * 9, 3}, rng);
  const ScanMaps maps = ScanMaps::build(3, 3);
  const Permutation perm = Permutation::parse("dbca");
  TensorMap params{{"in", p.in_proj}, {"gate", p.gate_proj}, {"out", p.out_proj}, {"A_log", p.cores[1].a_log},
                   {"dt_bias", p.cores[2].dt_bias}, {"C_proj", p.cores[3].c_proj}};
  auto loss = [&](Tape& tape, const std::map<std::string, Var>& v) {
    SS2DVars sv = ss2d_constants(tape, p);
    sv.in_proj = v.at("in");
    sv.gate_proj = v.at("gate");
    sv.out_proj = v.at("out");
    sv.cores[1].a_log = v.at("A_log");
    sv.cores[2].dt_bias = v.at("dt_bias");
    sv.cores[3].c_proj = v.at("C_proj");
    Var y = ss2d_forward(tape.constant(x), sv, perm, maps);
    return sum(mul(y, y));
  };
  const auto report = finite_difference_check(loss, params);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param << "[" << report.worst_index << "] " << report.worst_analytic << " vs " << report.worst_numeric;
}

TEST(BranchDivergence, OnsetsFollowTheRoutedIndexMaps) {
  std::mt19937_64 rng(8);
  const SS2DParams p = SS2DParams::random(2, 2, 3, rng);
  const Tensor grid = random_tensor({3, 3, 2}, rng);
  const ScanMaps maps = ScanMaps::build(3, 3);
  const Permutation perm = Permutation::parse("cadb");
  for (std::size_t pos = 0; pos < 9; ++pos) {
    const auto onsets = branch_divergence_onsets(p.cores, grid, perm, pos, Tensor({2}, {0.3, -0.2}));
    for (std::size_t k = 0; k < 4; ++k) {
      ASSERT_TRUE(onsets[k].has_value());
      EXPECT_EQ(*onsets[k], maps.time_of[static_cast<std::size_t>(perm[k])][pos] + 1);
    }
  }
}

TEST(BranchDivergence, RejectsPositionOutsideGrid) {
  std::mt19937_64 rng(9);
  const SS2DParams p = SS2DParams::random(2, 2, 2, rng);
  EXPECT_THROW(branch_divergence_onsets(p.cores, Tensor({2, 2, 2}), Permutation::identity(), 4, Tensor({2}, 1.0)),
               std::out_of_range);
}

}  // namespace
}  // namespace ssmtta
