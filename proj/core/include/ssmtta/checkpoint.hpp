// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container, version 1:
//
//   text header, one entry per line, terminated by an empty line
//     ssmtta-checkpoint
//     version=1
//     config.<key>=<value>     (ModelConfig::to_kv)
//     meta.<key>=<value>       (free-form run metadata)
//     arrays=<count>
//
//   <count> array records, parameters first then buffers, each sorted by name
//     u8  kind            0 = parameter, 1 = buffer
//     u32 name length, name bytes
//     u32 rank, u64 extent * rank
//     u64 element count, f64 * count
//
//   u32 CRC-32 of every preceding byte
//
// All integers and floats are little-endian.

#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "ssmtta/model.hpp"

namespace ssmtta {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, corrupt, version, config_mismatch, shape_mismatch };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  ModelConfig config;
  TensorMap params;
  TensorMap buffers;
  std::map<std::string, std::string> metadata;

  static Checkpoint capture(const MicroVMamba& model, std::map<std::string, std::string> metadata = {});
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Restores every parameter and running statistic. Throws CheckpointError on
/// a config or shape mismatch.
void reset(MicroVMamba& model, const Checkpoint& ckpt);
MicroVMamba model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace ssmtta
