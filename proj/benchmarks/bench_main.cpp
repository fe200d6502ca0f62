// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "ssmtta/adaptation.hpp"
#include "ssmtta/data.hpp"

namespace ssmtta {
namespace {

Tensor uniform(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

void BM_ScanRecurrence(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto T = static_cast<std::size_t>(state.range(0));
  const SSMCore core = SSMCore::random(16, 4, ScanMode::selective, rng);
  const Tensor x = uniform({T, 16}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(scan_recurrence(core, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ScanRecurrence)->Arg(16)->Arg(64)->Arg(256);

void BM_Forward(benchmark::State& state) {
  const MicroVMamba model = MicroVMamba::init(ModelConfig{}, 0);
  const Tensor x = gen_dataset(0, 64).train.slice(0, static_cast<std::size_t>(state.range(0))).images;
  for (auto _ : state) benchmark::DoNotOptimize(predict_default_path(model, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_AdaptStep(benchmark::State& state) {
  const MicroVMamba model = MicroVMamba::init(ModelConfig{}, 0);
  const Tensor x = gen_dataset(0, 64).train.slice(0, 32).images;
  const TensorMap start = model.extract(ParamSelector::ssm_cores);
  for (auto _ : state) {
    Adam adam(AdamConfig{.lr = 1e-2});
    benchmark::DoNotOptimize(adapt_step(model, start, x, Permutation::parse("badc"), adam));
  }
}
BENCHMARK(BM_AdaptStep)->Unit(benchmark::kMillisecond);

// One TRUST batch (K copies + average + prediction), sequential vs parallel.
void BM_TrustBatch(benchmark::State& state) {
  const Checkpoint ckpt = Checkpoint::capture(MicroVMamba::init(ModelConfig{}, 0));
  const SyntheticDataset data = gen_dataset(0, 160);
  const std::vector<LabeledImages> stream{data.test};
  const std::vector<Tensor> calib{data.test.images};
  const auto pool = Permutation::all();
  const EntropyRanking ranking = rank_permutations(model_from_checkpoint(ckpt), calib, pool);
  AdaptationConfig cfg;
  cfg.k = static_cast<std::size_t>(state.range(0));
  cfg.execution = state.range(1) ? Execution::parallel : Execution::sequential;
  for (auto _ : state) benchmark::DoNotOptimize(run_method(ckpt, stream, cfg, pool, &ranking));
  state.SetLabel(state.range(1) ? "parallel" : "sequential");
}
BENCHMARK(BM_TrustBatch)
    ->ArgsProduct({{1, 2, 4, 6, 8}, {0, 1}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

void BM_AverageWeights(benchmark::State& state) {
  std::vector<TensorMap> snaps;
  for (int k = 0; k < state.range(0); ++k)
    snaps.push_back(MicroVMamba::init(ModelConfig{}, static_cast<std::uint64_t>(k)).extract(ParamSelector::ssm_cores));
  for (auto _ : state) benchmark::DoNotOptimize(average_weights(snaps));
}
BENCHMARK(BM_AverageWeights)->Arg(2)->Arg(6)->Arg(8);

}  // namespace
}  // namespace ssmtta

BENCHMARK_MAIN();
