// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/experiment.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

namespace ssmtta {

std::vector<Permutation> parse_pool(const std::string& spec) {
  if (spec == "all") return Permutation::all();
  if (spec == "identity") return {Permutation::identity()};
  std::vector<Permutation> pool;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const Permutation p = Permutation::parse(item);
    if (std::find(pool.begin(), pool.end(), p) != pool.end()) throw std::invalid_argument("duplicate permutation '" + item + "' in pool");
    pool.push_back(p);
  }
  if (pool.empty()) throw std::invalid_argument("empty permutation pool '" + spec + "'");
  return pool;
}

std::vector<LabeledImages> build_stream(const LabeledImages& test, CorruptionKind kind, int severity,
                                        std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw std::invalid_argument("stream batch size must be at least 2");
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  LabeledImages shuffled = test.select(order);
  shuffled.images = corrupt(shuffled.images, CorruptionSpec{kind, severity, seed + 0x9e3779b97f4a7c15ULL});

  std::vector<LabeledImages> stream;
  for (std::size_t begin = 0; begin < shuffled.size(); begin += batch_size) {
    const std::size_t end = std::min(shuffled.size(), begin + batch_size);
    if (end - begin < 2) break;
    stream.push_back(shuffled.slice(begin, end));
  }
  return stream;
}

ExperimentRun run_experiment(const Checkpoint& checkpoint, const ExperimentConfig& config) {
  if (config.ranking_source != "target" && config.ranking_source != "clean") {
    throw std::invalid_argument("ranking source must be 'target' or 'clean', got '" + config.ranking_source + "'");
  }
  const SyntheticDataset data = gen_dataset(config.data_seed, config.data_samples);
  const auto stream = build_stream(data.test, config.corruption, config.severity, config.batch_size, config.seed);
  const auto pool = parse_pool(config.pool);

  std::optional<EntropyRanking> ranking;
  const bool ranked = config.adapt.method == Method::trust || config.adapt.method == Method::ensemble;
  if (ranked && config.ranking_source == "clean") {
    const auto clean = build_stream(data.test, config.corruption, 0, config.batch_size, config.seed);
    std::vector<Tensor> calib;
    for (std::size_t i = 0; i < std::min(config.adapt.calibration_batches, clean.size()); ++i) calib.push_back(clean[i].images);
    ranking = rank_permutations(model_from_checkpoint(checkpoint), calib, pool);
    ranking->source = "clean";
  }
  ExperimentRun run{config, run_method(checkpoint, stream, config.adapt, pool, ranking ? &*ranking : nullptr)};
  if (run.result.ranking) run.result.ranking->seed = config.seed;
  return run;
}

const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::k: return "k";
    case SweepAxis::iters: return "iters";
    case SweepAxis::batch: return "batch";
    case SweepAxis::polarity: return "polarity";
    case SweepAxis::eval_perm: return "eval-perm";
    case SweepAxis::aggregation: return "aggregation";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& s) {
  for (auto a : {SweepAxis::k, SweepAxis::iters, SweepAxis::batch, SweepAxis::polarity, SweepAxis::eval_perm,
                 SweepAxis::aggregation})
    if (s == to_string(a)) return a;
  throw std::invalid_argument("unknown sweep axis '" + s + "'");
}

std::vector<std::string> sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::k: return {"1", "2", "4", "6", "8"};
    case SweepAxis::iters: return {"1", "2", "3", "5"};
    case SweepAxis::batch: return {"8", "16", "32", "64"};
    case SweepAxis::polarity: return {"lowest", "highest"};
    case SweepAxis::eval_perm: {
      std::vector<std::string> out;
      for (const auto& p : Permutation::all()) out.push_back(p.str());
      return out;
    }
    case SweepAxis::aggregation: return {"trust", "repetition", "ensemble"};
  }
  return {};
}

std::vector<SweepRow> run_sweep(const Checkpoint& checkpoint, const ExperimentConfig& base, SweepAxis axis,
                                const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepRow> rows;
  const auto values = sweep_values(axis);
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    if (axis == SweepAxis::eval_perm) {
      // One adaptation run, every traversal probed on the same adapted weights.
      cfg.adapt.probe_perms.clear();
      for (const auto& v : values) cfg.adapt.probe_perms.push_back(Permutation::parse(v));
      const ExperimentRun run = run_experiment(checkpoint, cfg);
      for (const auto& v : values) {
        rows.push_back({to_string(axis), v, to_string(cfg.adapt.method), seed, run.result.samples(),
                        run.result.probe_correct.at(v)});
      }
      continue;
    }
    for (const auto& v : values) {
      ExperimentConfig c = cfg;
      switch (axis) {
        case SweepAxis::k: c.adapt.k = std::stoul(v); break;
        case SweepAxis::iters: c.adapt.iterations = std::stoul(v); break;
        case SweepAxis::batch: c.batch_size = std::stoul(v); break;
        case SweepAxis::polarity: c.adapt.polarity = parse_polarity(v); break;
        case SweepAxis::aggregation: c.adapt.method = parse_method(v); break;
        case SweepAxis::eval_perm: break;
      }
      const ExperimentRun run = run_experiment(checkpoint, c);
      rows.push_back({to_string(axis), v, to_string(c.adapt.method), seed, run.result.samples(), run.result.correct()});
    }
  }
  return rows;
}

std::vector<std::pair<std::string, double>> sweep_means(const std::vector<SweepRow>& rows) {
  std::vector<std::pair<std::string, double>> out;
  std::vector<std::size_t> counts;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r.value; });
    if (it == out.end()) {
      out.emplace_back(r.value, 0.0);
      counts.push_back(0);
      it = out.end() - 1;
    }
    it->second += r.accuracy();
    ++counts[static_cast<std::size_t>(it - out.begin())];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i].second /= static_cast<double>(counts[i]);
  return out;
}

}  // namespace ssmtta
