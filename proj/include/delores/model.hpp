// Copyright 2026 The delores Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "delores/ops.hpp"
#include "delores/rng.hpp"
#include "delores/tensor.hpp"

namespace delores {

/// Network dimensions. Defaults are the full-size encoder (5.3M params) and
/// the 8192-unit projector; desk-scale runs shrink channels/hidden/proj_dim.
struct ModelConfig {
  std::size_t n_mels = 64;
  std::size_t channels = 64;
  std::size_t hidden = 2048;
  std::size_t proj_dim = 8192;
  double encoder_dropout = 0.3;
  double projector_dropout = 0.3;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class Mode { kTrain, kEval };

/// Optimizer grouping: weights are LARS-adapted and decayed, biases and
/// normalization parameters are not.
enum class ParamKind { kWeight, kBias, kNorm };

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  ParamKind kind;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T> tensor;
};

/// (layer label, output shape) pairs recorded during a forward pass.
using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

/// He-normal fill: N(0, 2/fan_in).
template <typename T>
void he_normal(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = T(rng.normal() * stddev);
}

namespace detail {

inline void trace(ShapeTrace* t, std::string label, const Shape& shape) {
  if (t) t->emplace_back(std::move(label), shape);
}

template <typename T>
void append_bn(std::vector<NamedParam<T>>& out, const std::string& prefix, const BatchNorm<T>& bn) {
  if (!bn.affine()) return;
  out.push_back({prefix + ".scale", bn.scale, ParamKind::kNorm});
  out.push_back({prefix + ".shift", bn.shift, ParamKind::kNorm});
}

template <typename T>
void append_bn_buffers(std::vector<NamedBuffer<T>>& out, const std::string& prefix, const BatchNorm<T>& bn) {
  out.push_back({prefix + ".running_mean", bn.running_mean});
  out.push_back({prefix + ".running_var", bn.running_var});
}

}  // namespace detail

/// Convolutional encoder: three (conv3x3 -> BN -> ReLU -> maxpool2) blocks,
/// a time-major reshape, two per-frame linear layers, and max+mean pooling
/// over time, mapping [B,1,F,T] log-mel inputs to [B,hidden] embeddings.
///
/// The reshape sends [B,C,F/8,T/8] to [B,T/8,C*F/8] with feature index
/// c*(F/8) + f; checkpoints depend on this ordering.
template <typename T>
class Encoder {
 public:
  Encoder(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.n_mels % 8 != 0 || cfg.n_mels == 0) throw ShapeError("encoder: n_mels must be a positive multiple of 8");
    std::size_t cin = 1;
    for (auto& blk : blocks_) {
      blk.weight = Tensor<T>({cfg.channels, cin, 3, 3}, T(0), true);
      he_normal(blk.weight, cin * 9, rng);
      blk.bias = Tensor<T>({cfg.channels}, T(0), true);
      blk.bn = BatchNorm<T>::make(cfg.channels, true);
      cin = cfg.channels;
    }
    const std::size_t flat = cfg.channels * (cfg.n_mels / 8);
    fc1_w_ = Tensor<T>({cfg.hidden, flat}, T(0), true);
    he_normal(fc1_w_, flat, rng);
    fc1_b_ = Tensor<T>({cfg.hidden}, T(0), true);
    fc2_w_ = Tensor<T>({cfg.hidden, cfg.hidden}, T(0), true);
    he_normal(fc2_w_, cfg.hidden, rng);
    fc2_b_ = Tensor<T>({cfg.hidden}, T(0), true);
  }

  const ModelConfig& config() const { return cfg_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& rng, Tape<T>* tape = nullptr,
                    ShapeTrace* trace = nullptr) {
    check_input(x);
    const bool train = mode == Mode::kTrain;
    Tensor<T> h = x;
    int layer = 1;
    for (auto& blk : blocks_) {
      h = conv2d(h, blk.weight, blk.bias, tape);
      detail::trace(trace, "Conv2D-" + std::to_string(layer++), h.shape());
      h = batchnorm(h, blk.bn, train, tape);
      detail::trace(trace, "BatchNorm2D-" + std::to_string(layer++), h.shape());
      h = relu(h, tape);
      detail::trace(trace, "ReLU-" + std::to_string(layer++), h.shape());
      h = maxpool2d(h, tape);
      detail::trace(trace, "MaxPool2D-" + std::to_string(layer++), h.shape());
    }
    h = time_major_flatten(h, tape);
    detail::trace(trace, "Reshape-13", h.shape());
    h = linear(h, fc1_w_, fc1_b_, tape);
    detail::trace(trace, "Linear-14", h.shape());
    h = relu(h, tape);
    detail::trace(trace, "ReLU-15", h.shape());
    h = dropout(h, cfg_.encoder_dropout, train, rng, tape);
    detail::trace(trace, "Dropout-16", h.shape());
    h = linear(h, fc2_w_, fc2_b_, tape);
    detail::trace(trace, "Linear-17", h.shape());
    h = relu(h, tape);
    detail::trace(trace, "ReLU-18", h.shape());
    h = temporal_pool(h, tape);
    detail::trace(trace, "max(.)+mean(.)-19", h.shape());
    return h;
  }

  std::vector<NamedParam<T>> parameters() const {
    std::vector<NamedParam<T>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "encoder.conv" + std::to_string(i + 1);
      out.push_back({p + ".weight", blocks_[i].weight, ParamKind::kWeight});
      out.push_back({p + ".bias", blocks_[i].bias, ParamKind::kBias});
      detail::append_bn(out, "encoder.bn" + std::to_string(i + 1), blocks_[i].bn);
    }
    out.push_back({"encoder.fc1.weight", fc1_w_, ParamKind::kWeight});
    out.push_back({"encoder.fc1.bias", fc1_b_, ParamKind::kBias});
    out.push_back({"encoder.fc2.weight", fc2_w_, ParamKind::kWeight});
    out.push_back({"encoder.fc2.bias", fc2_b_, ParamKind::kBias});
    return out;
  }

  std::vector<NamedBuffer<T>> buffers() const {
    std::vector<NamedBuffer<T>> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      detail::append_bn_buffers(out, "encoder.bn" + std::to_string(i + 1), blocks_[i].bn);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

 private:
  void check_input(const Tensor<T>& x) const {
    const bool ok = x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == cfg_.n_mels && x.dim(3) % 8 == 0;
    if (!ok) {
      throw ShapeError("encoder: expected input [B, 1, " + std::to_string(cfg_.n_mels) +
                       ", T] with T a multiple of 8 (e.g. [B, 1, 64, 96]), got " + to_string(x.shape()));
    }
  }

  struct ConvBlock {
    Tensor<T> weight;
    Tensor<T> bias;
    BatchNorm<T> bn;
  };

  ModelConfig cfg_;
  std::array<ConvBlock, 3> blocks_;
  Tensor<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

/// Pretraining head: dropout -> linear -> BN -> ReLU -> linear -> BN without
/// affine, so training-mode outputs are standardized per coordinate.
template <typename T>
class Projector {
 public:
  Projector(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    fc1_w_ = Tensor<T>({cfg.proj_dim, cfg.hidden}, T(0), true);
    he_normal(fc1_w_, cfg.hidden, rng);
    fc1_b_ = Tensor<T>({cfg.proj_dim}, T(0), true);
    bn1_ = BatchNorm<T>::make(cfg.proj_dim, true);
    fc2_w_ = Tensor<T>({cfg.proj_dim, cfg.proj_dim}, T(0), true);
    he_normal(fc2_w_, cfg.proj_dim, rng);
    fc2_b_ = Tensor<T>({cfg.proj_dim}, T(0), true);
    bn2_ = BatchNorm<T>::make(cfg.proj_dim, false);
  }

  Tensor<T> forward(const Tensor<T>& h, Mode mode, Rng& rng, Tape<T>* tape = nullptr) {
    if (h.rank() != 2 || h.dim(1) != cfg_.hidden) {
      throw ShapeError("projector: expected [B, " + std::to_string(cfg_.hidden) + "], got " + to_string(h.shape()));
    }
    const bool train = mode == Mode::kTrain;
    if (train && h.dim(0) < 2) throw ShapeError("projector: training mode needs batch size >= 2");
    Tensor<T> g = dropout(h, cfg_.projector_dropout, train, rng, tape);
    g = linear(g, fc1_w_, fc1_b_, tape);
    g = batchnorm(g, bn1_, train, tape);
    g = relu(g, tape);
    g = linear(g, fc2_w_, fc2_b_, tape);
    return batchnorm(g, bn2_, train, tape);
  }

  std::vector<NamedParam<T>> parameters() const {
    std::vector<NamedParam<T>> out{{"projector.fc1.weight", fc1_w_, ParamKind::kWeight},
                                   {"projector.fc1.bias", fc1_b_, ParamKind::kBias}};
    detail::append_bn(out, "projector.bn1", bn1_);
    out.push_back({"projector.fc2.weight", fc2_w_, ParamKind::kWeight});
    out.push_back({"projector.fc2.bias", fc2_b_, ParamKind::kBias});
    return out;
  }

  std::vector<NamedBuffer<T>> buffers() const {
    std::vector<NamedBuffer<T>> out;
    detail::append_bn_buffers(out, "projector.bn1", bn1_);
    detail::append_bn_buffers(out, "projector.bn2", bn2_);
    return out;
  }

 private:
  ModelConfig cfg_;
  Tensor<T> fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  BatchNorm<T> bn1_, bn2_;
};

/// Single linear layer over encoder embeddings. Zero-initialized, so an
/// untrained head predicts class 0 for every input.
template <typename T>
class ClassifierHead {
 public:
  ClassifierHead(std::size_t in_features, std::size_t num_classes)
      : weight_({num_classes, in_features}, T(0), true), bias_({num_classes}, T(0), true) {
    if (num_classes < 2) throw ConfigError("classifier head needs at least 2 classes");
  }

  std::size_t num_classes() const { return weight_.dim(0); }
  std::size_t in_features() const { return weight_.dim(1); }

  Tensor<T> forward(const Tensor<T>& h, Tape<T>* tape = nullptr) const {
    if (h.rank() != 2 || h.dim(1) != in_features()) {
      throw ShapeError("classifier: expected [B, " + std::to_string(in_features()) + "], got " +
                       to_string(h.shape()));
    }
    return linear(h, weight_, bias_, tape);
  }

  std::vector<NamedParam<T>> parameters() const {
    return {{"head.weight", weight_, ParamKind::kWeight}, {"head.bias", bias_, ParamKind::kBias}};
  }

 private:
  Tensor<T> weight_, bias_;
};

/// Index of the largest logit per row (first on ties).
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = logits.data().data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

}  // namespace delores
