// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ssmtta/adaptation.hpp"
#include "ssmtta/train.hpp"
#include "test_support.hpp"

namespace ssmtta {
namespace {

using testing::random_images;
using testing::tiny_config;

TEST(ModelConfig, ValidatesGeometryAndClasses) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patch_size = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ModelConfig{};
  c.classes = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ModelConfig, KeyValueRoundTrip) {
  ModelConfig c = tiny_config();
  c.norm_eps = 1e-3;
  EXPECT_EQ(ModelConfig::from_kv(c.to_kv()), c);
}

TEST(MicroVMamba, DefaultModelIsMicroScale) {
  const MicroVMamba m = MicroVMamba::init(ModelConfig{}, 0);
  std::size_t n = 0;
  for (const auto& [_, t] : m.params()) n += t.size();
  EXPECT_GT(n, 3000u);
  EXPECT_LT(n, 20000u);
}

TEST(MicroVMamba, ZeroHeadGivesUniformPrediction) {
  MicroVMamba m = MicroVMamba::init(ModelConfig{}, 1);
  m.params().at("head.weight") = Tensor(m.params().at("head.weight").shape(), 0.0);
  m.params().at("head.bias") = Tensor(m.params().at("head.bias").shape(), 0.0);
  std::mt19937_64 rng(1);
  const Tensor logits = predict_logits(m, random_images(3, rng), Permutation::identity(), NormMode::batch_stats);
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
  for (double h : row_entropies(logits)) EXPECT_NEAR(h, std::log(8.0), 1e-12);
}

TEST(MicroVMamba, DuplicatedSampleGivesIdenticalRowsInRunningMode) {
  const MicroVMamba m = MicroVMamba::init(ModelConfig{}, 2);
  std::mt19937_64 rng(2);
  const Tensor one = random_images(1, rng);
  Tensor two({2, 16, 16, 1});
  std::copy(one.data().begin(), one.data().end(), two.data().begin());
  std::copy(one.data().begin(), one.data().end(), two.data().begin() + 256);
  const Tensor logits = predict_logits(m, two, Permutation::identity(), NormMode::running_stats);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(logits.at(0, c), logits.at(1, c));
}

TEST(MicroVMamba, IdenticalBranchCoresMakeLogitsRoutingInvariant) {
  MicroVMamba m = MicroVMamba::init(ModelConfig{}, 3);
  m.make_branches_identical();
  std::mt19937_64 rng(3);
  const Tensor x = random_images(4, rng);
  const Tensor ref = predict_logits(m, x, Permutation::identity(), NormMode::batch_stats);
  for (const auto& p : Permutation::all()) EXPECT_EQ(predict_logits(m, x, p, NormMode::batch_stats), ref) << p.str();
}

TEST(MicroVMamba, ForwardRejectsWrongInputShape) {
  const MicroVMamba m = MicroVMamba::init(ModelConfig{}, 4);
  EXPECT_THROW(predict_logits(m, Tensor({2, 16, 15, 1}), Permutation::identity(), NormMode::batch_stats),
               DimensionError);
}

TEST(MicroVMamba, NormModesAreDeterministic) {
  const MicroVMamba m = MicroVMamba::init(ModelConfig{}, 5);
  std::mt19937_64 rng(5);
  const Tensor x = random_images(6, rng);
  for (auto mode : {NormMode::batch_stats, NormMode::running_stats}) {
    EXPECT_EQ(predict_logits(m, x, Permutation::identity(), mode), predict_logits(m, x, Permutation::identity(), mode));
  }
}

TEST(ParamView, SsmCoresCoverEveryBranchOfEveryBlock) {
  const MicroVMamba m = MicroVMamba::init(ModelConfig{}, 6);
  const auto names = m.param_names(ParamSelector::ssm_cores);
  EXPECT_EQ(names.size(), 2u * 4u * 6u);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 4; ++k)
      for (const char* leaf : {"A_log", "B_proj", "C_proj", "dt_proj.weight", "dt_proj.bias", "D_skip"}) {
        const std::string name = "blocks." + std::to_string(b) + ".ss2d.core" + std::to_string(k) + "." + leaf;
        EXPECT_NE(std::find(names.begin(), names.end(), name), names.end()) << name;
      }
}

TEST(ParamView, SelectorsAreDisjointAndReconcile) {
  const MicroVMamba m = MicroVMamba::init(ModelConfig{}, 7);
  const auto cores = m.param_names(ParamSelector::ssm_cores);
  const auto norms = m.param_names(ParamSelector::norm_affines);
  EXPECT_EQ(norms.size(), 2u * 3u);
  std::set<std::string> a(cores.begin(), cores.end()), b(norms.begin(), norms.end()), all;
  for (const auto& n : norms) EXPECT_EQ(a.count(n), 0u) << n;
  for (const auto& [name, _] : m.params()) all.insert(name);
  std::set<std::string> frozen;
  for (const auto& name : all)
    if (!a.count(name) && !b.count(name)) frozen.insert(name);
  std::set<std::string> reunion = frozen;
  reunion.insert(a.begin(), a.end());
  reunion.insert(b.begin(), b.end());
  EXPECT_EQ(reunion, all);
  EXPECT_EQ(m.param_names(ParamSelector::all).size(), all.size());
}

TEST(ParamView, AssignRejectsUnknownNamesAndShapeChanges) {
  MicroVMamba m = MicroVMamba::init(tiny_config(), 8);
  EXPECT_THROW(m.assign({{"nope", Tensor({1})}}), std::invalid_argument);
  EXPECT_THROW(m.assign({{"head.bias", Tensor({99})}}), DimensionError);
}

TEST(EndToEndGradient, SsmCoreParamsMatchFiniteDifferences) {
  const ModelConfig cfg = tiny_config();
  const MicroVMamba m = MicroVMamba::init(cfg, 9);
  std::mt19937_64 rng(9);
  const Tensor x = random_images(4, rng, cfg);
  const TensorMap cores = m.extract(ParamSelector::ssm_cores);
  double base_loss = 0.0;
  const TensorMap analytic = pseudo_label_gradients(m, cores, x, Permutation::parse("bdac"), &base_loss);
  const std::vector<int> fixed = pseudo_labels(predict_logits(m, x, Permutation::parse("bdac"), NormMode::batch_stats));
  auto eval = [&](const TensorMap& values) {
    Tape tape;
    ForwardOptions opts;
    opts.norm = NormMode::batch_stats;
    opts.overrides = &values;
    return softmax_xent(forward(tape, m, x, Permutation::parse("bdac"), opts).logits, fixed).value().item();
  };
  double worst = 0.0;
  std::string where;
  const double eps = 1e-5;
  for (const auto& [name, t] : cores) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      TensorMap plus = cores, minus = cores;
      plus.at(name)[i] += eps;
      minus.at(name)[i] -= eps;
      const double numeric = (eval(plus) - eval(minus)) / (2 * eps);
      const double err = relative_error(analytic.at(name)[i], numeric);
      if (err > worst) {
        worst = err;
        where = name + "[" + std::to_string(i) + "] " + ::testing::PrintToString(analytic.at(name)[i]) + " vs " + ::testing::PrintToString(numeric);
      }
    }
  }
  EXPECT_LT(worst, 1e-4) << where;
}

TEST(TrainSource, ZeroLearningRateLeavesParametersUnchanged) {
  const ModelConfig cfg = tiny_config();
  std::mt19937_64 rng(10);
  LabeledImages train{random_images(16, rng, cfg), std::vector<int>(16)};
  for (std::size_t i = 0; i < 16; ++i) train.labels[i] = static_cast<int>(i % 3);
  TrainOptions opts;
  opts.epochs = 3;
  opts.lr = 0.0;
  opts.batch_size = 8;
  const Checkpoint ckpt = train_source(train, {}, cfg, opts);
  EXPECT_EQ(ckpt.params, MicroVMamba::init(cfg, opts.seed).params());
}

TEST(TrainSource, SameSeedGivesBitIdenticalCheckpoints) {
  const ModelConfig cfg = tiny_config();
  std::mt19937_64 rng(11);
  LabeledImages train{random_images(24, rng, cfg), std::vector<int>(24)};
  for (std::size_t i = 0; i < 24; ++i) train.labels[i] = static_cast<int>(i % 3);
  TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 8;
  opts.seed = 42;
  EXPECT_EQ(serialize_checkpoint(train_source(train, train, cfg, opts)),
            serialize_checkpoint(train_source(train, train, cfg, opts)));
}

TEST(TrainSource, NonFiniteLossAbortsWithDiagnostics) {
  const ModelConfig cfg = tiny_config();
  std::mt19937_64 rng(12);
  LabeledImages train{random_images(16, rng, cfg), std::vector<int>(16, 1)};
  TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 8;
  opts.lr = std::numeric_limits<double>::quiet_NaN();
  opts.cosine = false;
  try {
    train_source(train, {}, cfg, opts);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace ssmtta
