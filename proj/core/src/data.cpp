// Copyright 2026 The ssmtta Authors
// SPDX-License-Identifier: Apache-2.0

#include "ssmtta/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace ssmtta {

namespace {

constexpr std::size_t S = kSyntheticSize;

struct Jitter {
  double offset;     // bar offset / gradient centre shift, pixels
  double angle;      // radians
  double amplitude;  // foreground intensity
  double floor;      // background intensity
};

void draw(std::size_t label, const Jitter& j, double* img) {
  const double c = (static_cast<double>(S) - 1.0) / 2.0;
  for (std::size_t r = 0; r < S; ++r) {
    for (std::size_t col = 0; col < S; ++col) {
      const double y = static_cast<double>(r) - c, x = static_cast<double>(col) - c;
      double v = 0.0;
      if (label < 4) {
        const double theta = static_cast<double>(label) * std::numbers::pi / 4.0 + j.angle;
        const double dist = std::abs(x * std::sin(theta) - y * std::cos(theta) - j.offset);
        v = std::clamp(2.0 - dist, 0.0, 1.0);
      } else if (label < 6) {
        const std::size_t phase = label - 4;
        v = ((r / 4 + col / 4 + phase) % 2 == 0) ? 1.0 : 0.0;
      } else {
        const double rad = std::hypot(x - j.offset, y - j.offset) / (c * std::numbers::sqrt2);
        v = label == 6 ? 1.0 - rad : rad;
        v = std::clamp(v, 0.0, 1.0);
      }
      img[r * S + col] = std::clamp(j.floor + j.amplitude * v, 0.0, 1.0);
    }
  }
}

Tensor clip(Tensor t) {
  for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

}  // namespace

SyntheticDataset gen_dataset(std::uint64_t seed, std::size_t n) {
  if (n == 0 || n % kSyntheticClasses != 0) {
    throw std::invalid_argument("gen_dataset: n must be a positive multiple of 8, got " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> offset(-1.5, 1.5), angle(-0.12, 0.12), amp(0.7, 1.0), floor(0.0, 0.2);
  std::normal_distribution<double> noise(0.0, 0.03);

  const std::size_t per_class = n / kSyntheticClasses;
  const std::size_t train_per_class = (per_class * 4 + 2) / 5;
  SyntheticDataset ds;
  ds.seed = seed;
  ds.train.images = Tensor({train_per_class * kSyntheticClasses, S, S, 1});
  ds.test.images = Tensor({(per_class - train_per_class) * kSyntheticClasses, S, S, 1});
  std::size_t n_train = 0, n_test = 0;
  // Samples are generated class-interleaved; the first 80% of each class's
  // draws go to train.
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t label = 0; label < kSyntheticClasses; ++label) {
      const Jitter j{offset(rng), angle(rng), amp(rng), floor(rng)};
      const bool to_train = i < train_per_class;
      LabeledImages& dst = to_train ? ds.train : ds.test;
      std::size_t& idx = to_train ? n_train : n_test;
      double* img = dst.images.data().data() + idx * S * S;
      draw(label, j, img);
      for (std::size_t p = 0; p < S * S; ++p) img[p] = std::clamp(img[p] + noise(rng), 0.0, 1.0);
      dst.labels.push_back(static_cast<int>(label));
      ++idx;
    }
  }
  return ds;
}

const char* to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::shot_noise: return "shot_noise";
    case CorruptionKind::box_blur: return "box_blur";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::pixelate: return "pixelate";
  }
  return "?";
}

CorruptionKind parse_corruption(std::string_view name) {
  for (auto k : {CorruptionKind::gaussian_noise, CorruptionKind::shot_noise, CorruptionKind::box_blur,
                 CorruptionKind::contrast, CorruptionKind::pixelate}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown corruption kind '" + std::string(name) + "'");
}

double severity_parameter(CorruptionKind kind, int severity) {
  static constexpr std::array<double, 6> gaussian{0, .05, .1, .2, .3, .4};
  // Photon counts per unit intensity; 0 marks the identity.
  static constexpr std::array<double, 6> shot{0, 60, 25, 12, 5, 3};
  static constexpr std::array<double, 6> blur{1, 1, 3, 3, 5, 5};
  static constexpr std::array<double, 6> contrast{1, .8, .6, .4, .3, .2};
  static constexpr std::array<double, 6> pixelate{1, 1, 2, 2, 4, 4};
  if (severity < 0 || severity > 5) throw std::invalid_argument("corruption severity must be in 0..5, got " + std::to_string(severity));
  const auto s = static_cast<std::size_t>(severity);
  switch (kind) {
    case CorruptionKind::gaussian_noise: return gaussian[s];
    case CorruptionKind::shot_noise: return shot[s];
    case CorruptionKind::box_blur: return blur[s];
    case CorruptionKind::contrast: return contrast[s];
    case CorruptionKind::pixelate: return pixelate[s];
  }
  throw std::invalid_argument("unknown corruption kind");
}

Tensor corrupt(const Tensor& images, const CorruptionSpec& spec) {
  const double param = severity_parameter(spec.kind, spec.severity);
  if (spec.severity == 0) return images;
  if (images.rank() != 4) throw DimensionError("corrupt expects [n, H, W, ch], got " + shape_str(images.shape()));
  const std::size_t n = images.dim(0), H = images.dim(1), W = images.dim(2), ch = images.dim(3);
  auto at = [&](std::size_t i, std::size_t r, std::size_t c, std::size_t k) { return ((i * H + r) * W + c) * ch + k; };
  std::mt19937_64 rng(spec.seed);
  Tensor out = images;

  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      std::normal_distribution<double> g(0.0, param);
      for (double& v : out.data()) v += g(rng);
      break;
    }
    case CorruptionKind::shot_noise: {
      for (double& v : out.data()) {
        std::poisson_distribution<long> p(std::max(v, 0.0) * param);
        v = static_cast<double>(p(rng)) / param;
      }
      break;
    }
    case CorruptionKind::box_blur: {
      const auto half = static_cast<std::ptrdiff_t>(param) / 2;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t c = 0; c < W; ++c)
            for (std::size_t k = 0; k < ch; ++k) {
              double sum = 0.0;
              int count = 0;
              for (std::ptrdiff_t dr = -half; dr <= half; ++dr)
                for (std::ptrdiff_t dc = -half; dc <= half; ++dc) {
                  const auto rr = static_cast<std::ptrdiff_t>(r) + dr, cc = static_cast<std::ptrdiff_t>(c) + dc;
                  if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(H) || cc >= static_cast<std::ptrdiff_t>(W)) continue;
                  sum += images[at(i, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc), k)];
                  ++count;
                }
              out[at(i, r, c, k)] = sum / count;
            }
      break;
    }
    case CorruptionKind::contrast: {
      const std::size_t per = H * W * ch;
      for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t p = 0; p < per; ++p) mean += images[i * per + p];
        mean /= static_cast<double>(per);
        for (std::size_t p = 0; p < per; ++p) out[i * per + p] = mean + (images[i * per + p] - mean) * param;
      }
      break;
    }
    case CorruptionKind::pixelate: {
      const auto f = static_cast<std::size_t>(param);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r0 = 0; r0 < H; r0 += f)
          for (std::size_t c0 = 0; c0 < W; c0 += f)
            for (std::size_t k = 0; k < ch; ++k) {
              const std::size_t r1 = std::min(H, r0 + f), c1 = std::min(W, c0 + f);
              double sum = 0.0;
              for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) sum += images[at(i, r, c, k)];
              const double mean = sum / static_cast<double>((r1 - r0) * (c1 - c0));
              for (std::size_t r = r0; r < r1; ++r)
                for (std::size_t c = c0; c < c1; ++c) out[at(i, r, c, k)] = mean;
            }
      break;
    }
  }
  return clip(std::move(out));
}

double prediction_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("prediction_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const MicroVMamba& model, const LabeledImages& data, NormMode norm, std::size_t batch_size) {
  return accuracy(model, data, Permutation::identity(), norm, batch_size);
}

}  // namespace ssmtta
