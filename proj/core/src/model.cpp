// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ssmtta {

void ModelConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("image size " + std::to_string(image_size) + " not divisible by patch size " +
                                std::to_string(patch_size));
  }
  if (classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (channels == 0 || embed_dim == 0 || state_dim == 0 || blocks == 0) {
    throw std::invalid_argument("model extents must be positive");
  }
  if (norm != "batch") throw std::invalid_argument("unsupported normalization kind '" + norm + "'");
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {{"image_size", std::to_string(image_size)},
          {"channels", std::to_string(channels)},
          {"patch_size", std::to_string(patch_size)},
          {"embed_dim", std::to_string(embed_dim)},
          {"blocks", std::to_string(blocks)},
          {"state_dim", std::to_string(state_dim)},
          {"classes", std::to_string(classes)},
          {"norm", norm},
          {"norm_eps", num(norm_eps)},
          {"norm_momentum", num(norm_momentum)}};
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
  auto get = [&kv](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument(std::string("model config is missing '") + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.image_size = std::stoul(get("image_size"));
  c.channels = std::stoul(get("channels"));
  c.patch_size = std::stoul(get("patch_size"));
  c.embed_dim = std::stoul(get("embed_dim"));
  c.blocks = std::stoul(get("blocks"));
  c.state_dim = std::stoul(get("state_dim"));
  c.classes = std::stoul(get("classes"));
  c.norm = get("norm");
  c.norm_eps = std::stod(get("norm_eps"));
  c.norm_momentum = std::stod(get("norm_momentum"));
  return c;
}

const char* to_string(ParamSelector s) {
  switch (s) {
    case ParamSelector::ssm_cores: return "ssm-cores";
    case ParamSelector::norm_affines: return "norm-affines";
    case ParamSelector::all: return "all";
  }
  return "?";
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i) + "."; }
std::string core_prefix(std::size_t block, std::size_t slot) {
  return block_prefix(block) + "ss2d.core" + std::to_string(slot) + ".";
}

}  // namespace

bool selects(ParamSelector selector, const std::string& name) {
  switch (selector) {
    case ParamSelector::all: return true;
    case ParamSelector::ssm_cores: return name.find(".ss2d.core") != std::string::npos;
    case ParamSelector::norm_affines: return ends_with(name, "norm.weight") || ends_with(name, "norm.bias");
  }
  return false;
}

LabeledImages LabeledImages::slice(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> rows(end - begin);
  for (std::size_t i = begin; i < end; ++i) rows[i - begin] = i;
  return select(rows);
}

LabeledImages LabeledImages::select(const std::vector<std::size_t>& rows) const {
  Shape shape = images.shape();
  const std::size_t per = images.size() / std::max<std::size_t>(shape[0], 1);
  shape[0] = rows.size();
  LabeledImages out{Tensor(shape), std::vector<int>(rows.size())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= labels.size()) throw std::out_of_range("LabeledImages::select row out of range");
    std::copy_n(images.data().data() + rows[i] * per, per, out.images.data().data() + i * per);
    out.labels[i] = labels[rows[i]];
  }
  return out;
}

MicroVMamba MicroVMamba::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  MicroVMamba m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  const std::size_t D = config.embed_dim, N = config.state_dim;

  auto uniform = [&rng](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.data()) v = u(rng);
    return t;
  };
  auto add_norm = [&m, D](const std::string& prefix) {
    m.params_[prefix + "norm.weight"] = Tensor({D}, 1.0);
    m.params_[prefix + "norm.bias"] = Tensor({D}, 0.0);
    m.buffers_[prefix + "norm.running_mean"] = Tensor({D}, 0.0);
    m.buffers_[prefix + "norm.running_var"] = Tensor({D}, 1.0);
  };

  m.params_["embed.weight"] = uniform({config.patch_features(), D}, config.patch_features());
  m.params_["embed.bias"] = uniform({D}, config.patch_features());
  for (std::size_t i = 0; i < config.blocks; ++i) {
    const std::string bp = block_prefix(i);
    add_norm(bp);
    const SS2DParams ss = SS2DParams::random(D, D, N, rng);
    m.params_[bp + "ss2d.in_proj"] = ss.in_proj;
    m.params_[bp + "ss2d.gate_proj"] = ss.gate_proj;
    m.params_[bp + "ss2d.out_proj"] = ss.out_proj;
    for (std::size_t k = 0; k < 4; ++k) {
      const std::string cp = core_prefix(i, k);
      const SSMCore& core = ss.cores[k];
      m.params_[cp + "A_log"] = core.a_log;
      m.params_[cp + "B_proj"] = core.b_proj;
      m.params_[cp + "C_proj"] = core.c_proj;
      m.params_[cp + "dt_proj.weight"] = core.dt_weight;
      m.params_[cp + "dt_proj.bias"] = core.dt_bias;
      m.params_[cp + "D_skip"] = core.d_skip;
    }
  }
  add_norm("");
  m.params_["head.weight"] = uniform({D, config.classes}, D);
  m.params_["head.bias"] = uniform({config.classes}, D);
  return m;
}

std::vector<std::string> MicroVMamba::param_names(ParamSelector selector) const {
  std::vector<std::string> names;
  for (const auto& [name, _] : params_)
    if (selects(selector, name)) names.push_back(name);
  return names;
}

TensorMap MicroVMamba::extract(ParamSelector selector) const {
  TensorMap out;
  for (const auto& [name, t] : params_)
    if (selects(selector, name)) out.emplace(name, t);
  return out;
}

void MicroVMamba::assign(const TensorMap& values) {
  for (const auto& [name, t] : values) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("assign: unknown parameter '" + name + "'");
    if (it->second.shape() != t.shape()) throw DimensionError("assign " + name, it->second.shape(), t.shape());
  }
  for (const auto& [name, t] : values) params_.at(name) = t;
}

void MicroVMamba::make_branches_identical() {
  static const char* kFields[] = {"A_log", "B_proj", "C_proj", "dt_proj.weight", "dt_proj.bias", "D_skip"};
  for (std::size_t i = 0; i < config_.blocks; ++i)
    for (std::size_t k = 1; k < 4; ++k)
      for (const char* f : kFields) params_.at(core_prefix(i, k) + f) = params_.at(core_prefix(i, 0) + f);
}

// ---------------------------------------------------------------------------

namespace {

// [B, S, S, ch] -> [B*T, P*P*ch], tokens in row-major grid order.
Tensor patchify(const Tensor& images, const ModelConfig& c) {
  const std::size_t S = c.image_size, P = c.patch_size, G = c.grid(), ch = c.channels;
  const Shape expect{images.rank() ? images.dim(0) : 0, S, S, ch};
  if (images.shape() != expect) throw DimensionError("model input", images.shape(), expect);
  const std::size_t B = images.dim(0), T = c.tokens(), F = c.patch_features();
  Tensor out({B * T, F});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t gr = 0; gr < G; ++gr)
      for (std::size_t gc = 0; gc < G; ++gc) {
        double* row = out.data().data() + (b * T + gr * G + gc) * F;
        for (std::size_t pr = 0; pr < P; ++pr)
          for (std::size_t pc = 0; pc < P; ++pc)
            for (std::size_t k = 0; k < ch; ++k)
              row[(pr * P + pc) * ch + k] = images[((b * S + gr * P + pr) * S + gc * P + pc) * ch + k];
      }
  return out;
}

}  // namespace

ForwardPass forward(Tape& tape, const MicroVMamba& model, const Tensor& images, const Permutation& perm,
                    const ForwardOptions& options) {
  const ModelConfig& c = model.config();
  ForwardPass pass;

  std::map<std::string, Var> vars;
  for (const auto& [name, value] : model.params()) {
    const Tensor* src = &value;
    if (options.overrides) {
      auto it = options.overrides->find(name);
      if (it != options.overrides->end()) {
        if (it->second.shape() != value.shape()) throw DimensionError("override " + name, it->second.shape(), value.shape());
        src = &it->second;
      }
    }
    const bool grad = options.trainable && selects(*options.trainable, name);
    Var v = tape.leaf(*src, grad);
    vars.emplace(name, v);
    if (grad) pass.leaves.emplace(name, v);
  }
  auto p = [&vars](const std::string& name) -> const Var& { return vars.at(name); };

  auto norm = [&](const Var& x, const std::string& prefix) {
    BatchStats running;
    const BatchStats* run = nullptr;
    if (options.norm == NormMode::running_stats) {
      running = BatchStats{model.buffers().at(prefix + "norm.running_mean"), model.buffers().at(prefix + "norm.running_var")};
      run = &running;
    }
    BatchStats stats;
    Var y = batch_norm(x, p(prefix + "norm.weight"), p(prefix + "norm.bias"), options.norm, c.norm_eps, run,
                       options.norm == NormMode::batch_stats ? &stats : nullptr);
    if (options.norm == NormMode::batch_stats) pass.norm_stats.emplace(prefix + "norm", std::move(stats));
    return y;
  };

  const ScanMaps maps = ScanMaps::build(c.grid(), c.grid());
  Var x = linear(tape.constant(patchify(images, c)), p("embed.weight"), p("embed.bias"));
  for (std::size_t i = 0; i < c.blocks; ++i) {
    const std::string bp = block_prefix(i);
    SS2DVars ss;
    ss.in_proj = p(bp + "ss2d.in_proj");
    ss.gate_proj = p(bp + "ss2d.gate_proj");
    ss.out_proj = p(bp + "ss2d.out_proj");
    for (std::size_t k = 0; k < 4; ++k) {
      const std::string cp = core_prefix(i, k);
      ss.cores[k] = CoreVars{p(cp + "A_log"),          p(cp + "B_proj"),       p(cp + "C_proj"),
                             p(cp + "dt_proj.weight"), p(cp + "dt_proj.bias"), p(cp + "D_skip")};
    }
    x = add(x, ss2d_forward(norm(x, bp), ss, perm, maps));
  }
  Var pooled = row_group_mean(norm(x, ""), c.tokens());
  pass.logits = linear(pooled, p("head.weight"), p("head.bias"));
  return pass;
}

Tensor predict_logits(const MicroVMamba& model, const Tensor& images, const Permutation& perm, NormMode norm,
                      const TensorMap* overrides) {
  Tape tape;
  ForwardOptions opts;
  opts.norm = norm;
  opts.overrides = overrides;
  return forward(tape, model, images, perm, opts).logits.value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows expects [rows, C], got " + shape_str(logits.shape()));
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (logits[r * cols + c] > logits[r * cols + best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const MicroVMamba& model, const LabeledImages& data, const Permutation& perm, NormMode norm,
                std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  if (batch_size == 0) batch_size = data.size();
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    const LabeledImages chunk = data.slice(begin, end);
    const std::vector<int> pred = argmax_rows(predict_logits(model, chunk.images, perm, norm));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == chunk.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace ssmtta
