// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-time adaptation over traversal permutations and the comparison
// baselines.
//
// Per target batch, TRUST adapts one copy of the SSM-core parameters per
// selected permutation (pseudo-label cross-entropy, Adam), averages the
// copies, loads the average into the model and predicts the batch under the
// identity traversal. Every copy starts from the same parameters, so the
// copies are independent and may be adapted concurrently.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssmtta/checkpoint.hpp"
#include "ssmtta/optim.hpp"

namespace ssmtta {

/// -sum p log p in nats with 0 log 0 = 0. Throws std::invalid_argument if an
/// entry is negative or the entries do not sum to 1 within 1e-6.
double shannon_entropy(std::span<const double> probs);

/// Entropy of softmax(row) for every row of `logits`.
std::vector<double> row_entropies(const Tensor& logits);

struct RankEntry {
  Permutation perm;
  double entropy;  // mean over calibration samples, nats
};

struct EntropyRanking {
  std::vector<RankEntry> entries;  // ascending entropy, ties in permutation order
  std::size_t calibration_batches = 0;
  std::size_t calibration_samples = 0;
  std::uint64_t seed = 0;
  std::string source = "target";

  std::optional<double> entropy_of(const Permutation& perm) const;
};

/// Mean prediction entropy per permutation on the calibration batches
/// (images only), batch statistics in the norm layers. The model is not
/// modified. Throws std::invalid_argument on an empty pool or calibration set.
EntropyRanking rank_permutations(const MicroVMamba& model, std::span<const Tensor> calibration,
                                 std::span<const Permutation> pool);

enum class Polarity { lowest, highest };
const char* to_string(Polarity p);
Polarity parse_polarity(const std::string& s);

/// The first (lowest) or last (highest) k entries in ranking order.
/// Throws std::out_of_range unless 1 <= k <= ranking size.
std::vector<Permutation> select_top_k(const EntropyRanking& ranking, std::size_t k, Polarity polarity);

/// Detached argmax labels, ties to the lowest class.
std::vector<int> pseudo_labels(const Tensor& logits);

class AdaptationError : public std::runtime_error {
 public:
  AdaptationError(const std::string& what, std::string perm, std::size_t batch)
      : std::runtime_error(what), perm_(std::move(perm)), batch_(batch) {}
  const std::string& permutation() const { return perm_; }
  std::size_t batch() const { return batch_; }

 private:
  std::string perm_;
  std::size_t batch_;
};

/// `iterations` rounds of forward under `perm` -> pseudo-labels from that
/// forward -> cross-entropy -> Adam step on the SSM-core parameters, starting
/// from `start` (a full SSM-core map). Returns the adapted copy.
TensorMap adapt_step(const MicroVMamba& model, const TensorMap& start, const Tensor& images, const Permutation& perm,
                     Adam& optimizer, std::size_t iterations = 1, std::size_t batch_id = 0);

/// Gradient of the pseudo-label loss used by adapt_step, at `params`.
TensorMap pseudo_label_gradients(const MicroVMamba& model, const TensorMap& params, const Tensor& images,
                                 const Permutation& perm, double* loss = nullptr);

/// Per-name mean of the snapshots, or the weighted sum when `weights` is
/// given (weights must sum to 1). Each coordinate is summed exactly and
/// rounded once, so the result does not depend on the snapshot order.
/// Throws std::invalid_argument on an empty list and DimensionError on
/// mismatched names or shapes.
TensorMap average_weights(std::span<const TensorMap> snapshots, std::span<const double> weights = {});

/// Logits under the identity traversal with batch statistics. The only
/// prediction path used by TRUST.
Tensor predict_default_path(const MicroVMamba& model, const Tensor& images);

enum class Method { source, trust, trust_naive, tent, ensemble, repetition };
enum class AdaptMode { online, standard };
enum class Execution { sequential, parallel };

const char* to_string(Method m);
const char* to_string(AdaptMode m);
const char* to_string(Execution e);
Method parse_method(const std::string& s);
AdaptMode parse_mode(const std::string& s);
Execution parse_execution(const std::string& s);

struct AdaptationConfig {
  Method method = Method::trust;
  std::size_t k = 6;
  std::size_t iterations = 1;
  double lr = 1e-2;
  AdaptMode mode = AdaptMode::online;
  Execution execution = Execution::sequential;
  Polarity polarity = Polarity::lowest;
  /// Replace the uniform mean by softmax(-entropy) weights over the selection.
  bool entropy_weighted = false;
  /// Leading stream batches used for the offline ranking.
  std::size_t calibration_batches = 4;
  /// Extra traversals scored after each batch for diagnostics only. They
  /// never influence adaptation or the reported predictions.
  std::vector<Permutation> probe_perms;

  /// Throws std::invalid_argument on k = 0, iterations = 0, negative or
  /// non-finite lr, or k larger than the pool.
  void validate(std::size_t pool_size) const;
};

struct BatchRecord {
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::vector<int> predictions;

  double accuracy() const { return samples ? static_cast<double>(correct) / static_cast<double>(samples) : 0.0; }
};

/// Spread of parameter norms across the per-permutation copies of one batch.
struct DiversityStat {
  std::string name;
  double mean_l2 = 0.0;
  double std_l2 = 0.0;
};

struct PhaseTiming {
  double ranking_s = 0.0;
  double adaptation_s = 0.0;
  double prediction_s = 0.0;
};

struct RunResult {
  Method method = Method::source;
  std::vector<BatchRecord> batches;
  std::optional<EntropyRanking> ranking;
  std::vector<Permutation> selected;
  /// Adapted parameters after the final batch (averaged SSM cores for TRUST,
  /// norm affines for tent, empty for source and ensemble).
  TensorMap final_params;
  /// Per-batch average of the diversity statistics (TRUST and repetition).
  std::vector<DiversityStat> diversity;
  PhaseTiming timing;
  /// Correct predictions per probe traversal (permutation string).
  std::map<std::string, std::size_t> probe_correct;

  std::size_t samples() const;
  std::size_t correct() const;
  double accuracy() const;
};

/// Throws std::logic_error if any parameter not matched by `adapted`, or
/// any running statistic, differs from the checkpoint.
void audit_frozen(const MicroVMamba& model, const Checkpoint& checkpoint, ParamSelector adapted);

/// Runs `config.method` over the labeled target stream. Labels are used only
/// for scoring. When `ranking` is null and the method needs one, it is
/// computed on the first `calibration_batches` batches of the stream; those
/// batches are still evaluated. After TRUST-family runs, every parameter
/// outside the SSM cores and every running statistic is checked against the
/// checkpoint (std::logic_error if anything moved).
RunResult run_method(const Checkpoint& checkpoint, std::span<const LabeledImages> stream, const AdaptationConfig& config,
                     std::span<const Permutation> pool, const EntropyRanking* ranking = nullptr);

}  // namespace ssmtta
