// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/train.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "ssmtta/optim.hpp"

namespace ssmtta {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

double train_step(MicroVMamba& model, Adam& optimizer, const LabeledImages& batch) {
  Tape tape;
  ForwardOptions opts;
  opts.norm = NormMode::batch_stats;
  opts.trainable = ParamSelector::all;
  ForwardPass pass = forward(tape, model, batch.images, Permutation::identity(), opts);
  Var loss = softmax_xent(pass.logits, batch.labels);
  const double value = loss.value().item();
  if (!std::isfinite(value)) throw DivergenceError("source training loss is not finite (" + fmt(value) + ")");
  Gradients grads = tape.backward(loss);

  TensorMap g;
  for (const auto& [name, leaf] : pass.leaves) g.emplace(name, grads[leaf]);
  optimizer.step(model.params(), g);

  const double momentum = model.config().norm_momentum;
  const double rows = static_cast<double>(batch.size() * model.config().tokens());
  const double unbias = rows > 1 ? rows / (rows - 1) : 1.0;
  for (const auto& [prefix, stats] : pass.norm_stats) {
    Tensor& rm = model.buffers().at(prefix + ".running_mean");
    Tensor& rv = model.buffers().at(prefix + ".running_var");
    for (std::size_t i = 0; i < rm.size(); ++i) {
      rm[i] = (1.0 - momentum) * rm[i] + momentum * stats.mean[i];
      rv[i] = (1.0 - momentum) * rv[i] + momentum * stats.var[i] * unbias;
    }
  }
  return value;
}

Checkpoint train_source(const LabeledImages& train, const LabeledImages& test, const ModelConfig& config,
                        const TrainOptions& options, const std::function<void(const EpochLog&)>& on_epoch) {
  if (train.size() == 0) throw std::invalid_argument("train_source: empty training set");
  if (options.batch_size == 0) throw std::invalid_argument("train_source: batch size must be positive");
  MicroVMamba model = MicroVMamba::init(config, options.seed);
  Adam adam(AdamConfig{.lr = options.lr});
  std::mt19937_64 rng(options.seed ^ 0x5eed'0f'ba7c4ULL);

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    if (options.cosine) {
      const double progress = static_cast<double>(epoch) / static_cast<double>(options.epochs);
      adam.set_lr(options.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    }
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      if (end - begin < 2) continue;  // batch statistics need two samples
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      try {
        total += train_step(model, adam, train.select(rows));
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(steps) + ", lr " + fmt(options.lr));
      }
      ++steps;
    }
    if (on_epoch) on_epoch(EpochLog{epoch, steps ? total / static_cast<double>(steps) : 0.0});
  }

  std::map<std::string, std::string> meta{
      {"train.epochs", std::to_string(options.epochs)},
      {"train.lr", fmt(options.lr)},
      {"train.batch_size", std::to_string(options.batch_size)},
      {"train.seed", std::to_string(options.seed)},
      {"train.schedule", options.cosine ? "cosine" : "constant"},
      {"train.samples", std::to_string(train.size())},
  };
  if (test.size() > 0) meta["clean_accuracy"] = fmt(accuracy(model, test, Permutation::identity(), NormMode::running_stats));
  return Checkpoint::capture(model, std::move(meta));
}

}  // namespace ssmtta
