// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/adaptation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

namespace ssmtta {

double shannon_entropy(std::span<const double> probs) {
  double total = 0.0, h = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("shannon_entropy: negative or NaN probability");
    total += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("shannon_entropy: probabilities sum to " + std::to_string(total) + ", not 1");
  }
  return h;
}

std::vector<double> row_entropies(const Tensor& logits) {
  const Tensor p = softmax_rows(logits);
  const std::size_t rows = p.dim(0), cols = p.dim(1);
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = shannon_entropy(std::span(p.data().data() + r * cols, cols));
  return out;
}

std::optional<double> EntropyRanking::entropy_of(const Permutation& perm) const {
  for (const auto& e : entries)
    if (e.perm == perm) return e.entropy;
  return std::nullopt;
}

EntropyRanking rank_permutations(const MicroVMamba& model, std::span<const Tensor> calibration,
                                 std::span<const Permutation> pool) {
  if (pool.empty()) throw std::invalid_argument("rank_permutations: empty permutation pool");
  std::size_t samples = 0;
  for (const auto& batch : calibration) samples += batch.rank() ? batch.dim(0) : 0;
  if (samples == 0) throw std::invalid_argument("rank_permutations: empty calibration set");

  EntropyRanking ranking;
  ranking.calibration_batches = calibration.size();
  ranking.calibration_samples = samples;
  for (const Permutation& perm : pool) {
    double total = 0.0;
    for (const auto& batch : calibration) {
      if (batch.dim(0) == 0) continue;
      for (double h : row_entropies(predict_logits(model, batch, perm, NormMode::batch_stats))) total += h;
    }
    ranking.entries.push_back({perm, total / static_cast<double>(samples)});
  }
  std::sort(ranking.entries.begin(), ranking.entries.end(), [](const RankEntry& x, const RankEntry& y) {
    return x.entropy != y.entropy ? x.entropy < y.entropy : x.perm < y.perm;
  });
  for (std::size_t i = 1; i < ranking.entries.size(); ++i) {
    if (ranking.entries[i].perm == ranking.entries[i - 1].perm) {
      throw std::invalid_argument("rank_permutations: duplicate permutation " + ranking.entries[i].perm.str() + " in pool");
    }
  }
  return ranking;
}

const char* to_string(Polarity p) { return p == Polarity::lowest ? "lowest" : "highest"; }

Polarity parse_polarity(const std::string& s) {
  if (s == "lowest") return Polarity::lowest;
  if (s == "highest") return Polarity::highest;
  throw std::invalid_argument("unknown polarity '" + s + "' (expected lowest or highest)");
}

std::vector<Permutation> select_top_k(const EntropyRanking& ranking, std::size_t k, Polarity polarity) {
  const std::size_t n = ranking.entries.size();
  if (k < 1 || k > n) {
    throw std::out_of_range("select_top_k: k = " + std::to_string(k) + " outside 1.." + std::to_string(n));
  }
  std::vector<Permutation> out;
  const std::size_t begin = polarity == Polarity::lowest ? 0 : n - k;
  for (std::size_t i = begin; i < begin + k; ++i) out.push_back(ranking.entries[i].perm);
  return out;
}

std::vector<int> pseudo_labels(const Tensor& logits) { return argmax_rows(logits); }

TensorMap pseudo_label_gradients(const MicroVMamba& model, const TensorMap& params, const Tensor& images,
                                 const Permutation& perm, double* loss) {
  Tape tape;
  ForwardOptions opts;
  opts.norm = NormMode::batch_stats;
  opts.overrides = &params;
  opts.trainable = ParamSelector::ssm_cores;
  ForwardPass pass = forward(tape, model, images, perm, opts);
  const std::vector<int> labels = pseudo_labels(pass.logits.value());
  Var l = softmax_xent(pass.logits, labels);
  if (loss) *loss = l.value().item();
  if (!std::isfinite(l.value().item())) return {};
  Gradients g = tape.backward(l);
  TensorMap out;
  for (const auto& [name, leaf] : pass.leaves) out.emplace(name, g[leaf]);
  return out;
}

TensorMap adapt_step(const MicroVMamba& model, const TensorMap& start, const Tensor& images, const Permutation& perm,
                     Adam& optimizer, std::size_t iterations, std::size_t batch_id) {
  TensorMap theta = start;
  for (std::size_t it = 0; it < iterations; ++it) {
    double loss = 0.0;
    TensorMap grads = pseudo_label_gradients(model, theta, images, perm, &loss);
    if (!std::isfinite(loss)) {
      throw AdaptationError("non-finite adaptation loss under permutation " + perm.str() + " on batch " +
                                std::to_string(batch_id),
                            perm.str(), batch_id);
    }
    optimizer.step(theta, grads);
  }
  return theta;
}

namespace {

// Correctly rounded sum (Shewchuk partials, as in Python's math.fsum).
double exact_sum(std::vector<double>& partials, std::span<const double> xs) {
  partials.clear();
  for (double x : xs) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  std::size_t n = partials.size();
  if (n == 0) return 0.0;
  double hi = partials[--n], lo = 0.0;
  while (n > 0) {
    const double x = hi, y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0, x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

// Correctly rounded mean: the quotient estimate is refined by the exact
// residual sum - q*K, which is representable in partials.
double exact_mean(std::vector<double>& partials, std::vector<double>& scratch, std::span<const double> xs) {
  const auto K = static_cast<double>(xs.size());
  const double q = exact_sum(partials, xs) / K;
  const double p = q * K;
  const double e = std::fma(q, K, -p);
  scratch.assign(xs.begin(), xs.end());
  scratch.push_back(-p);
  scratch.push_back(-e);
  std::vector<double> tmp;
  const double r = exact_sum(tmp, scratch);
  return q + r / K;
}

}  // namespace

TensorMap average_weights(std::span<const TensorMap> snapshots, std::span<const double> weights) {
  if (snapshots.empty()) throw std::invalid_argument("average_weights: no snapshots");
  if (!weights.empty() && weights.size() != snapshots.size()) {
    throw std::invalid_argument("average_weights: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(snapshots.size()) + " snapshots");
  }
  const TensorMap& first = snapshots.front();
  for (const auto& snap : snapshots) {
    if (snap.size() != first.size()) throw DimensionError("average_weights: snapshots have different parameter sets");
    for (const auto& [name, t] : first) {
      auto it = snap.find(name);
      if (it == snap.end()) throw DimensionError("average_weights: snapshot lacks '" + name + "'");
      if (it->second.shape() != t.shape()) throw DimensionError("average_weights " + name, it->second.shape(), t.shape());
    }
  }
  TensorMap out;
  std::vector<double> terms(snapshots.size()), partials, scratch;
  for (const auto& [name, t] : first) {
    Tensor avg(t.shape());
    std::vector<const Tensor*> src;
    for (const auto& snap : snapshots) src.push_back(&snap.at(name));
    for (std::size_t i = 0; i < avg.size(); ++i) {
      for (std::size_t k = 0; k < src.size(); ++k) terms[k] = weights.empty() ? (*src[k])[i] : weights[k] * (*src[k])[i];
      avg[i] = weights.empty() ? exact_mean(partials, scratch, terms) : exact_sum(partials, terms);
    }
    out.emplace(name, std::move(avg));
  }
  return out;
}

Tensor predict_default_path(const MicroVMamba& model, const Tensor& images) {
  return predict_logits(model, images, Permutation::identity(), NormMode::batch_stats);
}

const char* to_string(Method m) {
  switch (m) {
    case Method::source: return "source";
    case Method::trust: return "trust";
    case Method::trust_naive: return "trust-naive";
    case Method::tent: return "tent";
    case Method::ensemble: return "ensemble";
    case Method::repetition: return "repetition";
  }
  return "?";
}
const char* to_string(AdaptMode m) { return m == AdaptMode::online ? "online" : "standard"; }
const char* to_string(Execution e) { return e == Execution::sequential ? "sequential" : "parallel"; }

Method parse_method(const std::string& s) {
  for (auto m : {Method::source, Method::trust, Method::trust_naive, Method::tent, Method::ensemble, Method::repetition})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}
AdaptMode parse_mode(const std::string& s) {
  if (s == "online") return AdaptMode::online;
  if (s == "standard") return AdaptMode::standard;
  throw std::invalid_argument("unknown mode '" + s + "' (expected online or standard)");
}
Execution parse_execution(const std::string& s) {
  if (s == "sequential") return Execution::sequential;
  if (s == "parallel") return Execution::parallel;
  throw std::invalid_argument("unknown execution '" + s + "' (expected sequential or parallel)");
}

void AdaptationConfig::validate(std::size_t pool_size) const {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (iterations == 0) throw std::invalid_argument("iterations must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and non-negative");
  const bool ranked = method == Method::trust || method == Method::ensemble;
  if (ranked && k > pool_size) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the pool of " + std::to_string(pool_size));
  }
}

std::size_t RunResult::samples() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.samples;
  return n;
}
std::size_t RunResult::correct() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.correct;
  return n;
}
double RunResult::accuracy() const {
  const std::size_t n = samples();
  return n ? static_cast<double>(correct()) / static_cast<double>(n) : 0.0;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

BatchRecord score(const std::vector<int>& predictions, const std::vector<int>& labels) {
  BatchRecord r;
  r.samples = labels.size();
  r.predictions = predictions;
  for (std::size_t i = 0; i < labels.size(); ++i) r.correct += predictions[i] == labels[i];
  return r;
}

std::vector<DiversityStat> diversity(std::span<const TensorMap> snaps) {
  std::vector<DiversityStat> out;
  for (const auto& [name, _] : snaps.front()) {
    std::vector<double> norms;
    for (const auto& s : snaps) {
      double sq = 0.0;
      for (double v : s.at(name).data()) sq += v * v;
      norms.push_back(std::sqrt(sq));
    }
    double mean = 0.0;
    for (double n : norms) mean += n;
    mean /= static_cast<double>(norms.size());
    double var = 0.0;
    for (double n : norms) var += (n - mean) * (n - mean);
    out.push_back({name, mean, std::sqrt(var / static_cast<double>(norms.size()))});
  }
  return out;
}

void accumulate(std::vector<DiversityStat>& total, const std::vector<DiversityStat>& batch) {
  if (total.empty()) {
    total = batch;
    return;
  }
  for (std::size_t i = 0; i < total.size(); ++i) {
    total[i].mean_l2 += batch[i].mean_l2;
    total[i].std_l2 += batch[i].std_l2;
  }
}

template <typename Fn>
void for_each_index(std::size_t n, Execution exec, Fn&& fn) {
  if (exec == Execution::sequential || n < 2) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> workers;
  workers.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    workers.emplace_back([&, k] {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Tensor entropy_loss_tent_step(MicroVMamba& model, const Tensor& images, Adam& adam) {
  Tape tape;
  ForwardOptions opts;
  opts.norm = NormMode::batch_stats;
  opts.trainable = ParamSelector::norm_affines;
  ForwardPass pass = forward(tape, model, images, Permutation::identity(), opts);
  const auto rows = static_cast<double>(pass.logits.value().dim(0));
  Var ls = log_softmax(pass.logits);
  Var loss = mul(sum(mul(exp(ls), ls)), -1.0 / rows);
  if (!std::isfinite(loss.value().item())) throw std::runtime_error("tent: non-finite entropy loss");
  Gradients g = tape.backward(loss);
  TensorMap grads;
  for (const auto& [name, leaf] : pass.leaves) grads.emplace(name, g[leaf]);
  TensorMap affines = model.extract(ParamSelector::norm_affines);
  adam.step(affines, grads);
  model.assign(affines);
  return loss.value();
}

}  // namespace

void audit_frozen(const MicroVMamba& model, const Checkpoint& ckpt, ParamSelector adapted) {
  for (const auto& [name, t] : model.params()) {
    if (!selects(adapted, name) && !(t == ckpt.params.at(name))) {
      throw std::logic_error("frozen-parameter audit: '" + name + "' changed during adaptation");
    }
  }
  for (const auto& [name, t] : model.buffers()) {
    if (!(t == ckpt.buffers.at(name))) throw std::logic_error("frozen-parameter audit: buffer '" + name + "' changed");
  }
}

RunResult run_method(const Checkpoint& checkpoint, std::span<const LabeledImages> stream, const AdaptationConfig& config,
                     std::span<const Permutation> pool, const EntropyRanking* ranking) {
  config.validate(pool.size());
  RunResult result;
  result.method = config.method;
  MicroVMamba model = model_from_checkpoint(checkpoint);
  const TensorMap source_cores = model.extract(ParamSelector::ssm_cores);
  const AdamConfig adam_cfg{.lr = config.lr};
  const bool online = config.mode == AdaptMode::online;

  // Permutation selection.
  const bool needs_ranking = config.method == Method::trust || config.method == Method::ensemble;
  if (needs_ranking) {
    if (ranking) {
      result.ranking = *ranking;
    } else {
      const auto t0 = Clock::now();
      std::vector<Tensor> calib;
      for (std::size_t i = 0; i < std::min(config.calibration_batches, stream.size()); ++i) calib.push_back(stream[i].images);
      result.ranking = rank_permutations(model, calib, pool);
      result.timing.ranking_s = seconds_since(t0);
    }
    result.selected = select_top_k(*result.ranking, config.k, config.polarity);
  } else if (config.method == Method::trust_naive) {
    result.selected = {Permutation::identity()};
  }

  std::vector<double> weights;
  if (config.entropy_weighted && result.ranking && config.method == Method::trust) {
    double z = 0.0;
    for (const auto& p : result.selected) z += std::exp(-*result.ranking->entropy_of(p));
    for (const auto& p : result.selected) weights.push_back(std::exp(-*result.ranking->entropy_of(p)) / z);
  }

  const std::size_t K = result.selected.size();
  std::vector<Adam> adams(std::max<std::size_t>(K, 1), Adam(adam_cfg));
  std::vector<TensorMap> ensemble_state(K, source_cores);

  for (std::size_t b = 0; b < stream.size(); ++b) {
    const LabeledImages& batch = stream[b];
    if (!online) {
      reset(model, checkpoint);
      std::fill(adams.begin(), adams.end(), Adam(adam_cfg));
      std::fill(ensemble_state.begin(), ensemble_state.end(), source_cores);
    }
    std::vector<int> predictions;

    switch (config.method) {
      case Method::source: {
        const auto t0 = Clock::now();
        predictions = argmax_rows(predict_default_path(model, batch.images));
        result.timing.prediction_s += seconds_since(t0);
        break;
      }
      case Method::trust:
      case Method::trust_naive:
      case Method::repetition: {
        auto t0 = Clock::now();
        const TensorMap start = model.extract(ParamSelector::ssm_cores);
        std::vector<TensorMap> snaps;
        if (config.method == Method::repetition) {
          TensorMap theta = start;
          for (std::size_t r = 0; r < config.k; ++r) {
            theta = adapt_step(model, theta, batch.images, Permutation::identity(), adams[0], config.iterations, b);
            snaps.push_back(theta);
          }
        } else {
          snaps.resize(K);
          for_each_index(K, config.execution, [&](std::size_t k) {
            snaps[k] = adapt_step(model, start, batch.images, result.selected[k], adams[k], config.iterations, b);
          });
        }
        TensorMap theta_bar = average_weights(snaps, weights);
        accumulate(result.diversity, diversity(snaps));
        model.assign(theta_bar);
        result.timing.adaptation_s += seconds_since(t0);
        t0 = Clock::now();
        predictions = argmax_rows(predict_default_path(model, batch.images));
        result.timing.prediction_s += seconds_since(t0);
        break;
      }
      case Method::tent: {
        auto t0 = Clock::now();
        entropy_loss_tent_step(model, batch.images, adams[0]);
        result.timing.adaptation_s += seconds_since(t0);
        t0 = Clock::now();
        predictions = argmax_rows(predict_default_path(model, batch.images));
        result.timing.prediction_s += seconds_since(t0);
        break;
      }
      case Method::ensemble: {
        auto t0 = Clock::now();
        for_each_index(K, config.execution, [&](std::size_t k) {
          ensemble_state[k] =
              adapt_step(model, ensemble_state[k], batch.images, result.selected[k], adams[k], config.iterations, b);
        });
        result.timing.adaptation_s += seconds_since(t0);
        t0 = Clock::now();
        Tensor probs;
        for (std::size_t k = 0; k < K; ++k) {
          const Tensor p = softmax_rows(
              predict_logits(model, batch.images, result.selected[k], NormMode::batch_stats, &ensemble_state[k]));
          if (k == 0) {
            probs = p;
          } else {
            for (std::size_t i = 0; i < p.size(); ++i) probs[i] += p[i];
          }
        }
        for (double& v : probs.data()) v /= static_cast<double>(K);
        predictions = argmax_rows(probs);
        result.timing.prediction_s += seconds_since(t0);
        break;
      }
    }
    if (!config.probe_perms.empty() && config.method != Method::ensemble) {
      for (const Permutation& perm : config.probe_perms) {
        const auto probe = argmax_rows(predict_logits(model, batch.images, perm, NormMode::batch_stats));
        std::size_t& hits = result.probe_correct[perm.str()];
        for (std::size_t i = 0; i < probe.size(); ++i) hits += probe[i] == batch.labels[i];
      }
    }
    result.batches.push_back(score(predictions, batch.labels));
  }

  if (!result.diversity.empty()) {
    const auto n = static_cast<double>(stream.size());
    for (auto& d : result.diversity) {
      d.mean_l2 /= n;
      d.std_l2 /= n;
    }
  }
  switch (config.method) {
    case Method::trust:
    case Method::trust_naive:
    case Method::repetition:
      audit_frozen(model, checkpoint, ParamSelector::ssm_cores);
      result.final_params = model.extract(ParamSelector::ssm_cores);
      break;
    case Method::tent:
      audit_frozen(model, checkpoint, ParamSelector::norm_affines);
      result.final_params = model.extract(ParamSelector::norm_affines);
      break;
    case Method::source:
    case Method::ensemble:
      audit_frozen(model, checkpoint, ParamSelector::ssm_cores);
      break;
  }
  return result;
}

}  // namespace ssmtta
