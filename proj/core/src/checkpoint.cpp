// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace ssmtta {

Checkpoint Checkpoint::capture(const MicroVMamba& model, std::map<std::string, std::string> metadata) {
  return Checkpoint{model.config(), model.params(), model.buffers(), std::move(metadata)};
}

namespace {

constexpr const char* kMagic = "ssmtta-checkpoint";

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t crc(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void check_text(const std::string& s, const std::string& what) {
  if (s.find_first_of("\n=") != std::string::npos && what != "value") {
    throw CheckpointError(CheckpointError::Kind::io, "checkpoint " + what + " '" + s + "' contains '=' or newline");
  }
  if (s.find('\n') != std::string::npos) {
    throw CheckpointError(CheckpointError::Kind::io, "checkpoint value contains a newline");
  }
}

void put_array(std::string& out, std::uint8_t kind, const std::string& name, const Tensor& t) {
  put_u8(out, kind);
  put_le(out, name.size(), 4);
  out += name;
  put_le(out, t.rank(), 4);
  for (std::size_t d : t.shape()) put_le(out, d, 8);
  put_le(out, t.size(), 8);
  for (double v : t.data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t pos, std::size_t end) : bytes_(bytes), pos_(pos), end_(end) {}

  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw CheckpointError(CheckpointError::Kind::corrupt, "checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_;
  std::size_t end_;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  out += kMagic;
  out += "\nversion=" + std::to_string(Checkpoint::kFormatVersion) + "\n";
  for (const auto& [k, v] : ckpt.config.to_kv()) {
    check_text(k, "key");
    check_text(v, "value");
    out += "config." + k + "=" + v + "\n";
  }
  for (const auto& [k, v] : ckpt.metadata) {
    check_text(k, "key");
    check_text(v, "value");
    out += "meta." + k + "=" + v + "\n";
  }
  out += "arrays=" + std::to_string(ckpt.params.size() + ckpt.buffers.size()) + "\n\n";
  for (const auto& [name, t] : ckpt.params) put_array(out, 0, name, t);
  for (const auto& [name, t] : ckpt.buffers) put_array(out, 1, name, t);
  put_le(out, crc(out.data(), out.size()), 4);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  using K = CheckpointError::Kind;
  if (bytes.size() < 4) throw CheckpointError(K::corrupt, "checkpoint too short");
  const std::size_t body = bytes.size() - 4;
  {
    Reader tail(bytes, body, bytes.size());
    const auto stored = static_cast<std::uint32_t>(tail.le(4));
    if (stored != crc(bytes.data(), body)) throw CheckpointError(K::corrupt, "checkpoint checksum mismatch");
  }

  const std::size_t header_end = bytes.find("\n\n");
  if (header_end == std::string::npos || header_end > body) throw CheckpointError(K::corrupt, "checkpoint header not terminated");
  std::istringstream header(bytes.substr(0, header_end));
  std::string line;
  std::getline(header, line);
  if (line != kMagic) throw CheckpointError(K::corrupt, "not an ssmtta checkpoint");

  Checkpoint ckpt;
  std::map<std::string, std::string> config_kv;
  std::size_t arrays = 0;
  bool have_version = false, have_arrays = false;
  while (std::getline(header, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(K::corrupt, "malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "version") {
      if (value != std::to_string(Checkpoint::kFormatVersion)) {
        throw CheckpointError(K::version, "checkpoint format version " + value + ", expected " +
                                              std::to_string(Checkpoint::kFormatVersion));
      }
      have_version = true;
    } else if (key == "arrays") {
      arrays = std::stoul(value);
      have_arrays = true;
    } else if (key.rfind("config.", 0) == 0) {
      config_kv[key.substr(7)] = value;
    } else if (key.rfind("meta.", 0) == 0) {
      ckpt.metadata[key.substr(5)] = value;
    } else {
      throw CheckpointError(K::corrupt, "unknown header key '" + key + "'");
    }
  }
  if (!have_version || !have_arrays) throw CheckpointError(K::corrupt, "checkpoint header incomplete");
  try {
    ckpt.config = ModelConfig::from_kv(config_kv);
  } catch (const std::exception& e) {
    throw CheckpointError(K::corrupt, std::string("checkpoint config: ") + e.what());
  }

  Reader r(bytes, header_end + 2, body);
  for (std::size_t i = 0; i < arrays; ++i) {
    const auto kind = r.le(1);
    const std::string name = r.str(r.le(4));
    const auto rank = r.le(4);
    if (rank > 8) throw CheckpointError(K::corrupt, "array '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.le(8);
    const auto count = r.le(8);
    if (count != shape_numel(shape)) throw CheckpointError(K::corrupt, "array '" + name + "' count/shape mismatch");
    std::vector<double> data(count);
    for (auto& v : data) v = std::bit_cast<double>(r.le(8));
    TensorMap& dst = kind == 0 ? ckpt.params : ckpt.buffers;
    if (kind > 1 || !dst.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw CheckpointError(K::corrupt, "duplicate or mistyped array '" + name + "'");
    }
  }
  if (r.pos() != body) throw CheckpointError(K::corrupt, "trailing bytes after checkpoint arrays");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void reset(MicroVMamba& model, const Checkpoint& ckpt) {
  using K = CheckpointError::Kind;
  if (!(model.config() == ckpt.config)) throw CheckpointError(K::config_mismatch, "checkpoint config does not match the model");
  auto restore = [](TensorMap& dst, const TensorMap& src, const char* what) {
    if (dst.size() != src.size()) {
      throw CheckpointError(K::shape_mismatch, std::string("checkpoint ") + what + " count " + std::to_string(src.size()) +
                                                   ", model has " + std::to_string(dst.size()));
    }
    for (auto& [name, t] : dst) {
      auto it = src.find(name);
      if (it == src.end()) throw CheckpointError(K::shape_mismatch, "checkpoint lacks '" + name + "'");
      if (it->second.shape() != t.shape()) {
        throw CheckpointError(K::shape_mismatch, "shape mismatch for '" + name + "': " + shape_str(it->second.shape()) +
                                                     " vs " + shape_str(t.shape()));
      }
    }
    for (auto& [name, t] : dst) t = src.at(name);
  };
  restore(model.params(), ckpt.params, "parameter");
  restore(model.buffers(), ckpt.buffers, "buffer");
}

MicroVMamba model_from_checkpoint(const Checkpoint& ckpt) {
  MicroVMamba model = MicroVMamba::init(ckpt.config, 0);
  reset(model, ckpt);
  return model;
}

}  // namespace ssmtta
