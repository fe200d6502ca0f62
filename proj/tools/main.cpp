// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// ssmtta: train a source model, rank traversals, adapt on a corrupted stream,
// sweep ablation axes and summarise the emitted CSVs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ssmtta/report.hpp"
#include "ssmtta/train.hpp"

namespace fs = std::filesystem;
using namespace ssmtta;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// Flags shared by rank, adapt and ablate.
struct CellFlags {
  ExperimentConfig cfg;
  std::string corruption = "gaussian_noise";
  std::string method = "trust";
  std::string mode = "online";
  std::string exec = "sequential";
  std::string polarity = "lowest";
  CLI::Option* data_seed = nullptr;
  CLI::Option* samples = nullptr;

  void add_to(CLI::App* app, bool adaptation_flags) {
    app->add_option("--checkpoint", cfg.checkpoint, "Source checkpoint")->required();
    data_seed = app->add_option("--data-seed", cfg.data_seed, "Dataset seed (default: from checkpoint)");
    samples = app->add_option("--samples", cfg.data_samples, "Dataset size (default: from checkpoint)");
    app->add_option("--corruption", corruption, "gaussian_noise|shot_noise|box_blur|contrast|pixelate")
        ->capture_default_str();
    app->add_option("--severity", cfg.severity, "Corruption severity 0..5")->capture_default_str();
    app->add_option("--batch", cfg.batch_size, "Stream batch size")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Stream seed (order and corruption noise)")->capture_default_str();
    app->add_option("--pool", cfg.pool, "Permutation pool: all | identity | comma list")->capture_default_str();
    app->add_option("--calib-batches", cfg.adapt.calibration_batches, "Leading batches used for ranking")
        ->capture_default_str();
    app->add_option("--ranking-source", cfg.ranking_source, "Ranking data: target | clean")->capture_default_str();
    if (!adaptation_flags) return;
    app->add_option("--method", method, "trust|trust-naive|tent|source|ensemble|repetition")->capture_default_str();
    app->add_option("--mode", mode, "online|standard")->capture_default_str();
    app->add_option("--exec", exec, "sequential|parallel")->capture_default_str();
    app->add_option("--k", cfg.adapt.k, "Selected permutations")->capture_default_str();
    app->add_option("--iters", cfg.adapt.iterations, "Adaptation iterations per batch")->capture_default_str();
    app->add_option("--lr", cfg.adapt.lr, "Adaptation learning rate")->capture_default_str();
    app->add_option("--polarity", polarity, "lowest|highest entropy selection")->capture_default_str();
    app->add_flag("--entropy-weighted", cfg.adapt.entropy_weighted, "Entropy-softmax weighted average");
  }

  ExperimentConfig resolve(const Checkpoint& ckpt) {
    cfg.corruption = parse_corruption(corruption);
    cfg.adapt.method = parse_method(method);
    cfg.adapt.mode = parse_mode(mode);
    cfg.adapt.execution = parse_execution(exec);
    cfg.adapt.polarity = parse_polarity(polarity);
    auto meta = [&](const char* key) -> std::optional<std::string> {
      auto it = ckpt.metadata.find(key);
      return it == ckpt.metadata.end() ? std::nullopt : std::optional(it->second);
    };
    if (data_seed->count() == 0) {
      if (auto v = meta("data.seed")) cfg.data_seed = std::stoull(*v);
    }
    if (samples->count() == 0) {
      if (auto v = meta("data.samples")) cfg.data_samples = std::stoul(*v);
    }
    return cfg;
  }
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  if (out.empty()) throw std::invalid_argument("no seeds given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ssmtta: traversal-permutation test-time adaptation for a micro vision SSM"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a source model and write a checkpoint");
  std::string train_out;
  std::uint64_t train_data_seed = 0;
  std::size_t train_samples = 2400;
  TrainOptions topts;
  ModelConfig mcfg;
  bool quiet = false;
  train->add_option("--out", train_out, "Checkpoint path")->required();
  train->add_option("--data-seed", train_data_seed, "Dataset seed")->capture_default_str();
  train->add_option("--samples", train_samples, "Dataset size (multiple of 8)")->capture_default_str();
  train->add_option("--epochs", topts.epochs, "Epochs")->capture_default_str();
  train->add_option("--lr", topts.lr, "Adam learning rate")->capture_default_str();
  train->add_option("--batch", topts.batch_size, "Batch size")->capture_default_str();
  train->add_option("--seed", topts.seed, "Init and shuffle seed")->capture_default_str();
  train->add_option("--embed-dim", mcfg.embed_dim, "Embedding width")->capture_default_str();
  train->add_option("--blocks", mcfg.blocks, "SS2D blocks")->capture_default_str();
  train->add_option("--state-dim", mcfg.state_dim, "SSM state size")->capture_default_str();
  train->add_flag("--quiet", quiet, "No per-epoch log");

  // rank
  auto* rank = app.add_subcommand("rank", "Rank traversal permutations by prediction entropy");
  CellFlags rank_flags;
  std::string rank_out;
  rank_flags.add_to(rank, false);
  rank->add_option("--out", rank_out, "Ranking JSON path")->required();

  // adapt
  auto* adapt = app.add_subcommand("adapt", "Run one method over a corrupted target stream");
  CellFlags adapt_flags;
  std::string report_out, csv_out, from_report;
  adapt_flags.add_to(adapt, true);
  adapt->add_option("--report", report_out, "RunReport JSON path");
  adapt->add_option("--csv", csv_out, "Accuracy CSV path");
  auto* from_opt = adapt->add_option("--from-report", from_report, "Re-run the config embedded in a RunReport");
  // --checkpoint is optional when reproducing.
  adapt->get_option("--checkpoint")->required(false);
  (void)from_opt;

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Sweep one axis over several stream seeds");
  CellFlags ablate_flags;
  std::string axis, seeds = "0,1,2", sweep_out;
  ablate_flags.add_to(ablate, true);
  ablate->add_option("--axis", axis, "k|iters|batch|polarity|eval-perm|aggregation")->required();
  ablate->add_option("--seeds", seeds, "Comma-separated stream seeds")->capture_default_str();
  ablate->add_option("--out", sweep_out, "Sweep CSV path")->required();

  // report
  auto* report = app.add_subcommand("report", "Aggregate accuracy and sweep CSVs into a summary table");
  std::vector<std::string> inputs;
  std::string summary_out;
  report->add_option("inputs", inputs, "CSV files")->required()->check(CLI::ExistingFile);
  report->add_option("--out", summary_out, "Summary CSV path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train) {
      mcfg.validate();
      const SyntheticDataset data = gen_dataset(train_data_seed, train_samples);
      auto log = [&](const EpochLog& l) {
        if (!quiet) std::cerr << "epoch " << l.epoch + 1 << "/" << topts.epochs << " loss " << l.mean_loss << "\n";
      };
      Checkpoint ckpt = train_source(data.train, data.test, mcfg, topts, log);
      ckpt.metadata["data.seed"] = std::to_string(train_data_seed);
      ckpt.metadata["data.samples"] = std::to_string(train_samples);
      save_checkpoint(ckpt, train_out);
      std::cout << "clean_accuracy_pct " << format_pct(std::stod(ckpt.metadata.at("clean_accuracy"))) << "\n";
      return 0;
    }
    if (*rank) {
      const Checkpoint ckpt = load_checkpoint(rank_flags.cfg.checkpoint);
      const ExperimentConfig cfg = rank_flags.resolve(ckpt);
      const SyntheticDataset data = gen_dataset(cfg.data_seed, cfg.data_samples);
      const int severity = cfg.ranking_source == "clean" ? 0 : cfg.severity;
      if (cfg.ranking_source != "clean" && cfg.ranking_source != "target") {
        throw std::invalid_argument("ranking source must be target or clean");
      }
      const auto stream = build_stream(data.test, cfg.corruption, severity, cfg.batch_size, cfg.seed);
      std::vector<Tensor> calib;
      for (std::size_t i = 0; i < std::min(cfg.adapt.calibration_batches, stream.size()); ++i) calib.push_back(stream[i].images);
      EntropyRanking ranking = rank_permutations(model_from_checkpoint(ckpt), calib, parse_pool(cfg.pool));
      ranking.seed = cfg.seed;
      ranking.source = cfg.ranking_source;
      write_file(rank_out, ranking_json(ranking, cfg));
      for (const auto& e : ranking.entries) std::cout << e.perm.str() << " " << e.entropy << "\n";
      return 0;
    }
    if (*adapt) {
      ExperimentConfig cfg;
      if (!from_report.empty()) {
        cfg = config_from_json(read_file(from_report));
        if (!adapt_flags.cfg.checkpoint.empty()) cfg.checkpoint = adapt_flags.cfg.checkpoint;
      } else {
        if (adapt_flags.cfg.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
        cfg = adapt_flags.resolve(load_checkpoint(adapt_flags.cfg.checkpoint));
      }
      const Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
      const ExperimentRun run = run_experiment(ckpt, cfg);
      if (!report_out.empty()) write_file(report_out, run_report_json(run));
      if (!csv_out.empty()) write_file(csv_out, accuracy_csv(run));
      std::cout << to_string(cfg.adapt.method) << " accuracy_pct " << format_pct(run.result.accuracy()) << "\n";
      return 0;
    }
    if (*ablate) {
      const Checkpoint ckpt = load_checkpoint(ablate_flags.cfg.checkpoint);
      const ExperimentConfig cfg = ablate_flags.resolve(ckpt);
      const auto rows = run_sweep(ckpt, cfg, parse_axis(axis), parse_seeds(seeds));
      write_file(sweep_out, sweep_csv(rows));
      for (const auto& [value, mean] : sweep_means(rows)) std::cout << axis << "=" << value << " " << format_pct(mean) << "\n";
      return 0;
    }
    if (*report) {
      std::vector<std::string> texts;
      for (const auto& path : inputs) texts.push_back(read_file(path));
      const std::string summary = summarize_csvs(texts);
      if (summary_out.empty()) {
        std::cout << summary;
      } else {
        write_file(summary_out, summary);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
