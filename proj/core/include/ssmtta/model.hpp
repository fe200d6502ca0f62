// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Micro VMamba-style classifier:
//
//   patch embed -> N x [batch-norm -> SS2D(perm) -> residual] -> batch-norm
//               -> global average pool -> linear head
//
// Parameters live in a single name-sorted map. The naming scheme is part of
// the checkpoint format:
//
//   embed.weight [P*P*ch, D]        embed.bias [D]
//   blocks.<i>.norm.{weight,bias}   [D]
//   blocks.<i>.ss2d.{in_proj,gate_proj} [D, D]   blocks.<i>.ss2d.out_proj [D, D]
//   blocks.<i>.ss2d.core<k>.{A_log,B_proj,C_proj} [D, N]
//   blocks.<i>.ss2d.core<k>.dt_proj.{weight [D, D], bias [D]}
//   blocks.<i>.ss2d.core<k>.D_skip [D]
//   norm.{weight,bias} [D]          head.weight [D, C]   head.bias [C]
//
// Running statistics are buffers named <norm>.running_mean / running_var.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssmtta/gradcheck.hpp"
#include "ssmtta/nn.hpp"
#include "ssmtta/ss2d.hpp"

namespace ssmtta {

struct ModelConfig {
  std::size_t image_size = 16;
  std::size_t channels = 1;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 16;
  std::size_t blocks = 2;
  std::size_t state_dim = 4;
  std::size_t classes = 8;
  std::string norm = "batch";
  double norm_eps = 1e-5;
  double norm_momentum = 0.1;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t patch_features() const { return patch_size * patch_size * channels; }

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;

  std::map<std::string, std::string> to_kv() const;
  static ModelConfig from_kv(const std::map<std::string, std::string>& kv);

  bool operator==(const ModelConfig&) const = default;
};

enum class ParamSelector { ssm_cores, norm_affines, all };

const char* to_string(ParamSelector s);
bool selects(ParamSelector selector, const std::string& name);

struct LabeledImages {
  Tensor images;            // [n, H, W, ch]
  std::vector<int> labels;  // n

  std::size_t size() const { return labels.size(); }
  LabeledImages slice(std::size_t begin, std::size_t end) const;
  LabeledImages select(const std::vector<std::size_t>& rows) const;
};

class MicroVMamba {
 public:
  static MicroVMamba init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const TensorMap& params() const { return params_; }
  TensorMap& params() { return params_; }
  const TensorMap& buffers() const { return buffers_; }
  TensorMap& buffers() { return buffers_; }

  /// Ordered (name, parameter) pairs matched by `selector`.
  std::vector<std::string> param_names(ParamSelector selector) const;
  TensorMap extract(ParamSelector selector) const;
  /// Overwrites the named parameters. Throws on unknown names or shape changes.
  void assign(const TensorMap& values);

  /// Copies branch slot 0 of every SS2D block into slots 1..3.
  void make_branches_identical();

 private:
  ModelConfig config_;
  TensorMap params_;
  TensorMap buffers_;
};

struct ForwardOptions {
  NormMode norm = NormMode::running_stats;
  /// Parameters substituted by name, e.g. adapted SSM cores.
  const TensorMap* overrides = nullptr;
  /// Parameters created as requires_grad leaves.
  std::optional<ParamSelector> trainable;
};

struct ForwardPass {
  Var logits;                                    // [batch, classes]
  std::map<std::string, Var> leaves;             // trainable leaves by name
  std::map<std::string, BatchStats> norm_stats;  // batch statistics per norm layer (batch mode)
};

/// images: [batch, H, W, ch].
ForwardPass forward(Tape& tape, const MicroVMamba& model, const Tensor& images, const Permutation& perm,
                    const ForwardOptions& options);

Tensor predict_logits(const MicroVMamba& model, const Tensor& images, const Permutation& perm, NormMode norm,
                      const TensorMap* overrides = nullptr);

/// Row-wise argmax; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor& logits);

/// Fraction of correct argmax predictions, evaluated in chunks of `batch_size`.
double accuracy(const MicroVMamba& model, const LabeledImages& data, const Permutation& perm, NormMode norm,
                std::size_t batch_size = 64);

}  // namespace ssmtta
