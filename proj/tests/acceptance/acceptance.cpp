// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <array>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssmtta/report.hpp"
#include "ssmtta/train.hpp"

namespace fs = std::filesystem;
using namespace ssmtta;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  double lr = AdaptationConfig{}.lr;
  std::size_t samples = 2400;
  std::size_t epochs = TrainOptions{}.epochs;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string cli;
  fs::path out_dir = fs::temp_directory_path() / "ssmtta_acceptance";
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string pct(double fraction) { return format_pct(fraction); }

Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// 1 ------------------------------------------------------------------------------

Outcome recurrence_kernel_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<std::size_t> len(1, 32), state(1, 8), chan(1, 4);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t T = len(rng), N = state(rng), d = chan(rng);
    SSMCore core = SSMCore::random(d, N, ScanMode::time_invariant, rng);
    for (double& b : core.dt_bias.data()) b = uniform({1}, rng, -4.0, 1.5)[0];
    const Tensor x = uniform({T, d}, rng, -1.0, 1.0);
    Tensor conv = causal_conv(x, conv_kernel(core, T));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t e = 0; e < d; ++e) conv.at(t, e) += core.d_skip[e] * x.at(t, e);
    worst = std::max(worst, max_abs_diff(conv, scan_recurrence(core, x).y));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst < 1e-10 && secs < 1.0, "instances=50 max_abs_diff=" + fmt(worst) + " runtime=" + fmt(secs) + "s"};
}

// 2 ------------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const ModelConfig cfg;
  const MicroVMamba model = MicroVMamba::init(cfg, 17);
  const SyntheticDataset data = gen_dataset(3, 80);
  const Tensor x = data.test.slice(0, 4).images;
  const Permutation perm = Permutation::parse("cadb");
  const TensorMap cores = model.extract(ParamSelector::ssm_cores);
  const TensorMap analytic = pseudo_label_gradients(model, cores, x, perm);
  const auto labels = pseudo_labels(predict_logits(model, x, perm, NormMode::batch_stats));
  auto loss_at = [&](const TensorMap& values) {
    Tape tape;
    ForwardOptions opts;
    opts.norm = NormMode::batch_stats;
    opts.overrides = &values;
    return softmax_xent(forward(tape, model, x, perm, opts).logits, labels).value().item();
  };
  const double eps = 1e-5;
  double worst = 0.0;
  std::string where;
  std::size_t coords = 0;
  TensorMap probe = cores;
  for (const auto& [name, t] : cores) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      probe.at(name)[i] = orig + eps;
      const double fp = loss_at(probe);
      probe.at(name)[i] = orig - eps;
      const double fm = loss_at(probe);
      probe.at(name)[i] = orig;
      const double err = relative_error(analytic.at(name)[i], (fp - fm) / (2 * eps));
      if (err > worst) worst = err, where = name + "[" + std::to_string(i) + "]";
      ++coords;
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst < 1e-4 && secs < 30.0, "coordinates=" + std::to_string(coords) + " max_rel_error=" + fmt(worst) +
                                           " at " + where + " runtime=" + fmt(secs) + "s"};
}

// 3 ------------------------------------------------------------------------------

std::vector<LabeledImages> small_stream(std::uint64_t seed) {
  const SyntheticDataset data = gen_dataset(seed, 400);
  return build_stream(data.test, CorruptionKind::gaussian_noise, 3, 16, seed);
}

std::vector<int> predictions_of(const RunResult& r) {
  std::vector<int> out;
  for (const auto& b : r.batches) out.insert(out.end(), b.predictions.begin(), b.predictions.end());
  return out;
}

Outcome structural_reductions() {
  const Checkpoint ckpt = Checkpoint::capture(MicroVMamba::init(ModelConfig{}, 5));
  const auto stream = small_stream(5);
  std::ostringstream detail;
  bool ok = true;

  // lr = 0 reproduces source-only.
  AdaptationConfig src_cfg;
  src_cfg.method = Method::source;
  AdaptationConfig zero = src_cfg;
  zero.method = Method::trust;
  zero.lr = 0.0;
  const RunResult src = run_method(ckpt, stream, src_cfg, Permutation::all());
  const RunResult tz = run_method(ckpt, stream, zero, Permutation::all());
  const bool lr0_ok = predictions_of(src) == predictions_of(tz) && src.correct() == tz.correct() &&
                      tz.final_params == model_from_checkpoint(ckpt).extract(ParamSelector::ssm_cores);
  ok &= lr0_ok;
  detail << "lr0_equal=" << (lr0_ok ? "yes" : "no");

  // K = 1 over {identity} against a hand-written self-training loop.
  AdaptationConfig one;
  one.method = Method::trust;
  one.k = 1;
  one.lr = 1e-2;
  const std::vector<Permutation> pool{Permutation::identity()};
  const RunResult trust1 = run_method(ckpt, stream, one, pool);
  MicroVMamba model = model_from_checkpoint(ckpt);
  TensorMap theta = model.extract(ParamSelector::ssm_cores), m1, m2;
  for (const auto& [name, t] : theta) m1.emplace(name, Tensor(t.shape(), 0.0)), m2.emplace(name, Tensor(t.shape(), 0.0));
  std::vector<int> naive;
  for (std::size_t b = 0; b < stream.size(); ++b) {
    Tape tape;
    ForwardOptions opts;
    opts.norm = NormMode::batch_stats;
    opts.overrides = &theta;
    opts.trainable = ParamSelector::ssm_cores;
    ForwardPass pass = forward(tape, model, stream[b].images, Permutation::identity(), opts);
    const Tensor& logits = pass.logits.value();
    std::vector<int> labels(logits.dim(0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.dim(1); ++c)
        if (logits.at(i, c) > logits.at(i, best)) best = c;
      labels[i] = static_cast<int>(best);
    }
    Gradients g = tape.backward(softmax_xent(pass.logits, labels));
    const double step = static_cast<double>(b + 1);
    for (auto& [name, p] : theta) {
      const Tensor& grad = g[pass.leaves.at(name)];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m1.at(name)[i] = 0.9 * m1.at(name)[i] + (1.0 - 0.9) * grad[i];
        m2.at(name)[i] = 0.999 * m2.at(name)[i] + (1.0 - 0.999) * grad[i] * grad[i];
        const double mhat = m1.at(name)[i] / (1.0 - std::pow(0.9, step));
        const double vhat = m2.at(name)[i] / (1.0 - std::pow(0.999, step));
        p[i] -= one.lr * mhat / (std::sqrt(vhat) + 1e-8);
      }
    }
    model.assign(theta);
    const auto p = argmax_rows(predict_logits(model, stream[b].images, Permutation::identity(), NormMode::batch_stats));
    naive.insert(naive.end(), p.begin(), p.end());
  }
  double theta_gap = 0.0;
  for (const auto& [name, t] : theta) theta_gap = std::max(theta_gap, max_abs_diff(t, trust1.final_params.at(name)));
  const bool k1_ok = predictions_of(trust1) == naive && theta_gap < 1e-12;
  ok &= k1_ok;
  detail << " k1_selftrain_equal=" << (k1_ok ? "yes" : "no") << " (theta_gap=" << fmt(theta_gap) << ")";

  // Identical branch cores make the logits routing invariant.
  MicroVMamba same = MicroVMamba::init(ModelConfig{}, 6);
  same.make_branches_identical();
  const Tensor x = stream[0].images;
  const Tensor ref = predict_logits(same, x, Permutation::identity(), NormMode::batch_stats);
  double spread = 0.0;
  for (const auto& p : Permutation::all()) spread = std::max(spread, max_abs_diff(predict_logits(same, x, p, NormMode::batch_stats), ref));
  ok &= spread < 1e-12;
  detail << " identical_branch_max_diff=" << fmt(spread);
  return {ok, detail.str()};
}

// 4 ------------------------------------------------------------------------------

Outcome averaging_properties() {
  using Big = boost::multiprecision::cpp_bin_float_100;
  std::mt19937_64 rng(4);
  std::vector<TensorMap> snaps;
  for (std::uint64_t s = 0; s < 6; ++s) {
    TensorMap m = MicroVMamba::init(ModelConfig{}, 100 + s).extract(ParamSelector::ssm_cores);
    for (auto& [_, t] : m)
      for (double& v : t.data()) v *= std::exp2(static_cast<double>(rng() % 40) - 20.0);
    snaps.push_back(std::move(m));
  }
  bool identity = true;
  for (std::size_t k = 1; k <= 8; ++k) identity &= average_weights(std::vector<TensorMap>(k, snaps[0])) == snaps[0];

  const TensorMap avg = average_weights(snaps);
  std::vector<std::size_t> order(snaps.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t orders = 0;
  bool invariant = true;
  do {
    std::vector<TensorMap> shuffled;
    for (std::size_t i : order) shuffled.push_back(snaps[i]);
    invariant &= average_weights(shuffled) == avg;
    ++orders;
  } while (std::next_permutation(order.begin(), order.end()));

  // Elementwise oracle: straightforward sum and divide, carried out in
  // 100-digit arithmetic and rounded once.
  std::size_t mismatches = 0, coords = 0;
  for (const auto& [name, t] : avg) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      Big sum = 0;
      for (const auto& s : snaps) sum += Big(s.at(name)[i]);
      mismatches += t[i] != static_cast<double>(sum / static_cast<int>(snaps.size()));
      ++coords;
    }
  }
  return {identity && invariant && mismatches == 0,
          std::string("identity=") + (identity ? "yes" : "no") + " orders_checked=" + std::to_string(orders) +
              " order_invariant=" + (invariant ? "yes" : "no") + " oracle_mismatches=" + std::to_string(mismatches) +
              "/" + std::to_string(coords)};
}

// 5 ------------------------------------------------------------------------------

// Traversal time of grid position (r, c) for each direction, written out
// directly from the scan definitions.
std::size_t expected_time(std::size_t dir, std::size_t r, std::size_t c, std::size_t H, std::size_t W) {
  const std::size_t row_major = r * W + c, col_major = c * H + r, last = H * W - 1;
  switch (dir) {
    case 0: return row_major;
    case 1: return col_major;
    case 2: return last - row_major;
    default: return last - col_major;
  }
}

Outcome artifact_shift() {
  std::mt19937_64 rng(5);
  const std::size_t H = 4, W = 4, d = 3;
  const SS2DParams params = SS2DParams::random(d, d, 4, rng);
  const Tensor grid = uniform({H, W, d}, rng, -1.0, 1.0);
  const Tensor eps({d}, {0.25, -0.5, 0.125});
  std::size_t checks = 0, failures = 0;
  for (const auto& perm : Permutation::all()) {
    for (std::size_t pos = 0; pos < H * W; ++pos) {
      const auto onsets = branch_divergence_onsets(params.cores, grid, perm, pos, eps);
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t dir = static_cast<std::size_t>(perm[k]);
        ++checks;
        failures += !onsets[k] || *onsets[k] != expected_time(dir, pos / W, pos % W, H, W) + 1;
      }
    }
  }
  return {failures == 0, "permutations=24 positions=16 branch_checks=" + std::to_string(checks) +
                             " mismatches=" + std::to_string(failures)};
}

// 6-9 ----------------------------------------------------------------------------

struct Shared {
  Checkpoint ckpt;
  double clean = 0.0;
  double train_s = 0.0;
  ExperimentConfig base;
  std::map<std::string, std::vector<double>> acc;  // label -> per-seed accuracy
  std::map<std::string, double> secs;
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

const std::vector<double>& cell(Shared& s, const Options& o, const std::string& label,
                                const std::function<void(ExperimentConfig&)>& edit) {
  auto it = s.acc.find(label);
  if (it != s.acc.end()) return it->second;
  const auto t0 = Clock::now();
  std::vector<double> per_seed;
  for (std::uint64_t seed : o.seeds) {
    ExperimentConfig cfg = s.base;
    cfg.seed = seed;
    edit(cfg);
    per_seed.push_back(run_experiment(s.ckpt, cfg).result.accuracy());
  }
  s.secs[label] = std::chrono::duration<double>(Clock::now() - t0).count();
  return s.acc[label] = per_seed;
}

auto with(Method m, std::size_t k = 6, Polarity pol = Polarity::lowest) {
  return [=](ExperimentConfig& c) {
    c.adapt.method = m;
    c.adapt.k = k;
    c.adapt.polarity = pol;
  };
}

std::string seeds_str(const std::vector<double>& v) {
  std::string s;
  for (double a : v) s += (s.empty() ? "" : "/") + pct(a);
  return s;
}

Outcome trust_efficacy(Shared& s, const Options& o) {
  const auto& src = cell(s, o, "source", with(Method::source));
  const auto& tent = cell(s, o, "tent", with(Method::tent));
  const auto& trust = cell(s, o, "trust", with(Method::trust));
  const double gain = 100.0 * (mean(trust) - mean(src));
  const double secs = s.train_s + s.secs["source"] + s.secs["tent"] + s.secs["trust"];
  const bool ok = s.clean >= 0.95 && gain >= 3.0 && mean(trust) >= mean(tent) && secs < 300.0;
  return {ok, "clean=" + pct(s.clean) + "% source=" + pct(mean(src)) + "% (" + seeds_str(src) + ") tent=" + pct(mean(tent)) +
                  "% (" + seeds_str(tent) + ") trust=" + pct(mean(trust)) + "% (" + seeds_str(trust) +
                  ") gain=" + fmt(gain) + "pp runtime=" + fmt(secs) + "s"};
}

Outcome entropy_polarity(Shared& s, const Options& o) {
  const auto& low = cell(s, o, "trust", with(Method::trust));
  const auto& high = cell(s, o, "trust-highest", with(Method::trust, 6, Polarity::highest));
  return {mean(high) <= mean(low), "lowest=" + pct(mean(low)) + "% highest=" + pct(mean(high)) + "%"};
}

void write_sweep(const Options& o, const std::string& file, const std::string& axis,
                 const std::vector<std::pair<std::string, std::string>>& values, Shared& s) {
  std::vector<SweepRow> rows;
  const SyntheticDataset data = gen_dataset(s.base.data_seed, s.base.data_samples);
  for (const auto& [value, label] : values) {
    const auto& acc = s.acc.at(label);
    for (std::size_t i = 0; i < o.seeds.size(); ++i) {
      SweepRow r{axis, value, label.rfind("trust", 0) == 0 ? "trust" : label, o.seeds[i], 0, 0};
      std::size_t samples = 0;
      for (const auto& b : build_stream(data.test, s.base.corruption, s.base.severity, s.base.batch_size, o.seeds[i]))
        samples += b.size();
      r.samples = samples;
      r.correct = static_cast<std::size_t>(std::llround(acc[i] * static_cast<double>(samples)));
      rows.push_back(r);
    }
  }
  fs::create_directories(o.out_dir);
  std::ofstream(o.out_dir / file) << sweep_csv(rows);
}

Outcome aggregation_ablation(Shared& s, const Options& o) {
  const auto& trust = cell(s, o, "trust", with(Method::trust));
  const auto& rep = cell(s, o, "repetition", with(Method::repetition));
  const auto& ens = cell(s, o, "ensemble", with(Method::ensemble));
  write_sweep(o, "aggregation.csv", "aggregation", {{"trust", "trust"}, {"repetition", "repetition"}, {"ensemble", "ensemble"}}, s);
  return {mean(trust) >= mean(rep) && mean(trust) >= mean(ens),
          "trust=" + pct(mean(trust)) + "% repetition=" + pct(mean(rep)) + "% ensemble=" + pct(mean(ens)) +
              "% csv=" + (o.out_dir / "aggregation.csv").string()};
}

Outcome permutation_count(Shared& s, const Options& o) {
  std::vector<std::pair<std::string, std::string>> values;
  std::string detail;
  for (std::size_t k : {1, 2, 4, 6, 8}) {
    const std::string label = k == 6 ? "trust" : "trust-k" + std::to_string(k);
    const auto& acc = cell(s, o, label, with(Method::trust, k));
    values.emplace_back(std::to_string(k), label);
    detail += "K" + std::to_string(k) + "=" + pct(mean(acc)) + "% ";
  }
  write_sweep(o, "k_sweep.csv", "k", values, s);
  return {mean(s.acc.at("trust")) >= mean(s.acc.at("trust-k2")), detail + "csv=" + (o.out_dir / "k_sweep.csv").string()};
}

// 10 -----------------------------------------------------------------------------

Outcome mode_and_execution(Shared& s) {
  const SyntheticDataset data = gen_dataset(s.base.data_seed, s.base.data_samples);
  const auto stream = build_stream(data.test, CorruptionKind::gaussian_noise, 3, 32, 0);
  const auto pool = Permutation::all();
  std::vector<Tensor> calib;
  for (std::size_t i = 0; i < 4; ++i) calib.push_back(stream[i].images);
  const EntropyRanking ranking = rank_permutations(model_from_checkpoint(s.ckpt), calib, pool);

  AdaptationConfig standard = s.base.adapt;
  standard.method = Method::trust;
  standard.mode = AdaptMode::standard;
  auto multiset = [](const RunResult& r) {
    std::multiset<std::pair<std::size_t, std::size_t>> m;
    for (const auto& b : r.batches) m.emplace(b.correct, b.samples);
    return m;
  };
  const auto ref = multiset(run_method(s.ckpt, stream, standard, pool, &ranking));
  std::mt19937_64 rng(10);
  bool order_free = true;
  for (int trial = 0; trial < 2; ++trial) {
    std::vector<LabeledImages> shuffled = stream;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    order_free &= multiset(run_method(s.ckpt, shuffled, standard, pool, &ranking)) == ref;
  }

  AdaptationConfig seq = s.base.adapt;
  seq.method = Method::trust;
  AdaptationConfig par = seq;
  par.execution = Execution::parallel;
  const RunResult a = run_method(s.ckpt, stream, seq, pool, &ranking);
  const RunResult b = run_method(s.ckpt, stream, par, pool, &ranking);
  double gap = 0.0;
  for (const auto& [name, t] : a.final_params) gap = std::max(gap, max_abs_diff(t, b.final_params.at(name)));
  const bool same_preds = predictions_of(a) == predictions_of(b);
  return {order_free && gap < 1e-9 && same_preds,
          std::string("standard_order_invariant=") + (order_free ? "yes" : "no") + " theta_gap=" + fmt(gap) +
              " predictions_identical=" + (same_preds ? "yes" : "no")};
}

// 11 -----------------------------------------------------------------------------

int run_cli(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome cli_reproducibility(Shared& s, const Options& o) {
  if (o.cli.empty() || !fs::exists(o.cli)) return {false, "CLI binary not available"};
  fs::create_directories(o.out_dir);
  const fs::path ckpt = o.out_dir / "source.ckpt";
  save_checkpoint(s.ckpt, ckpt);
  std::size_t runs = 0, reproduced = 0;
  std::string failed;
  for (const char* method : {"source", "trust", "trust-naive", "tent", "ensemble", "repetition"}) {
    for (const char* extra : {"", " --mode standard --exec parallel --k 3 --seed 4"}) {
      const fs::path first = o.out_dir / (std::string(method) + (*extra ? "_b" : "_a") + ".json");
      const fs::path second = o.out_dir / (std::string(method) + (*extra ? "_b" : "_a") + "_rerun.json");
      const std::string cmd = o.cli + " adapt --checkpoint " + ckpt.string() + " --samples 800 --batch 16 --method " +
                              method + " --lr " + fmt(o.lr, 17) + extra + " --report " + first.string();
      ++runs;
      if (run_cli(cmd) != 0 || run_cli(o.cli + " adapt --from-report " + first.string() + " --report " + second.string()) != 0) {
        failed += std::string(" ") + method;
        continue;
      }
      const auto j1 = nlohmann::json::parse(std::ifstream(first));
      const auto j2 = nlohmann::json::parse(std::ifstream(second));
      bool same = true;
      for (const char* key : {"samples", "correct", "accuracy_pct", "per_batch", "per_corruption", "config"}) same &= j1.at(key) == j2.at(key);
      if (same) {
        ++reproduced;
      } else {
        failed += std::string(" ") + method;
      }
    }
  }
  return {reproduced == runs, "cli_runs=" + std::to_string(runs) + " reproduced=" + std::to_string(reproduced) +
                                  (failed.empty() ? "" : " failed:" + failed)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssmtta acceptance gate"};
  Options o;
  std::vector<int> only;
  std::string out_dir = o.out_dir.string();
  app.add_option("--lr", o.lr, "Adaptation learning rate for every method")->capture_default_str();
  app.add_option("--samples", o.samples, "Synthetic dataset size")->capture_default_str();
  app.add_option("--epochs", o.epochs, "Source training epochs")->capture_default_str();
  app.add_option("--seeds", o.seeds, "Stream seeds")->delimiter(',');
  app.add_option("--cli", o.cli, "Path to the ssmtta CLI binary");
  app.add_option("--out-dir", out_dir, "Artifact directory")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  o.out_dir = out_dir;

  auto selected = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  Shared shared;
  bool trained = false;
  auto ensure_model = [&] {
    if (trained) return;
    const auto t0 = Clock::now();
    const SyntheticDataset data = gen_dataset(0, o.samples);
    TrainOptions topts;
    topts.epochs = o.epochs;
    shared.ckpt = train_source(data.train, data.test, ModelConfig{}, topts);
    shared.clean = std::stod(shared.ckpt.metadata.at("clean_accuracy"));
    shared.ckpt.metadata["data.seed"] = "0";
    shared.ckpt.metadata["data.samples"] = std::to_string(o.samples);
    shared.train_s = std::chrono::duration<double>(Clock::now() - t0).count();
    shared.base.checkpoint = (o.out_dir / "source.ckpt").string();
    shared.base.data_samples = o.samples;
    shared.base.adapt.lr = o.lr;
    trained = true;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"recurrence/kernel equivalence", recurrence_kernel_equivalence},
      {"end-to-end gradient correctness", gradient_correctness},
      {"structural reductions", structural_reductions},
      {"averaging properties", averaging_properties},
      {"artifact-shift onsets", artifact_shift},
      {"TRUST efficacy vs source and TENT", [&] { ensure_model(); return trust_efficacy(shared, o); }},
      {"high- vs low-entropy selection", [&] { ensure_model(); return entropy_polarity(shared, o); }},
      {"aggregation ablation", [&] { ensure_model(); return aggregation_ablation(shared, o); }},
      {"permutation-count ablation", [&] { ensure_model(); return permutation_count(shared, o); }},
      {"mode and execution equivalence", [&] { ensure_model(); return mode_and_execution(shared); }},
      {"CLI reproducibility", [&] { ensure_model(); return cli_reproducibility(shared, o); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected(id)) continue;
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failures += !out.pass;
    std::cout << "criterion " << std::setw(2) << id << " " << (out.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
              << ": " << out.detail << std::endl;
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
