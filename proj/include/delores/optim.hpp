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

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "delores/error.hpp"
#include "delores/model.hpp"
#include "delores/tensor.hpp"

namespace delores {

struct LarsConfig {
  double base_lr_weights = 0.2;
  double base_lr_biases = 0.0048;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  double trust_coefficient = 0.001;
  /// When false every group takes plain momentum-SGD steps.
  bool adapt = true;
};

struct ScheduleConfig {
  double warmup_epochs = 10;
  double total_epochs = 100;
  double final_lr_fraction = 1e-3;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 100;
};

/// Base learning rate scaled by batch_size / 256.
inline double scaled_lr(double base_lr, std::size_t batch_size) {
  return base_lr * static_cast<double>(batch_size) / 256.0;
}

/// Linear warmup to base_lr, then cosine decay to base_lr * final_lr_fraction
/// at the last step of the run. `step` may be fractional.
inline double lr_at_continuous(double step, std::size_t steps_per_epoch, const ScheduleConfig& cfg,
                               double base_lr) {
  if (steps_per_epoch == 0) throw ConfigError("lr_at: steps_per_epoch must be positive");
  if (!(cfg.warmup_epochs >= 0 && cfg.warmup_epochs < cfg.total_epochs)) {
    throw ConfigError("lr schedule: warmup must be shorter than the run");
  }
  const double warmup_steps = cfg.warmup_epochs * static_cast<double>(steps_per_epoch);
  const double total_steps = cfg.total_epochs * static_cast<double>(steps_per_epoch);
  if (step < warmup_steps) return base_lr * step / warmup_steps;
  if (step == warmup_steps) return base_lr;
  const double final_lr = base_lr * cfg.final_lr_fraction;
  // The last step of the run is total_steps - 1.
  const double span = std::max(1.0, total_steps - 1.0 - warmup_steps);
  const double progress = std::min(1.0, (step - warmup_steps) / span);
  if (progress == 1.0) return final_lr;
  return final_lr + (base_lr - final_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

inline double lr_at(std::size_t step, std::size_t steps_per_epoch, const ScheduleConfig& cfg, double base_lr) {
  return lr_at_continuous(static_cast<double>(step), steps_per_epoch, cfg, base_lr);
}

namespace detail {

template <typename T>
void check_grads_finite(const std::vector<NamedParam<T>>& params) {
  for (const auto& p : params) {
    for (const T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in " + p.name + "; step aborted");
    }
  }
}

template <typename T>
double l2_norm(std::span<const T> v) {
  double s = 0.0;
  for (const T x : v) s += double(x) * double(x);
  return std::sqrt(s);
}

}  // namespace detail

/// Layer-wise adaptive rate scaling with momentum.
///
/// For adapted (weight) tensors the local rate is
///   trust * |w| / (|g| + wd * |w|)
/// when both norms are positive, else 1. Bias and normalization tensors skip
/// adaptation and weight decay and use the bias learning rate.
template <typename T>
class Lars {
 public:
  Lars(const LarsConfig& cfg, std::vector<NamedParam<T>> params) : cfg_(cfg), params_(std::move(params)) {
    for (const auto& p : params_) momentum_.emplace_back(p.tensor.shape(), T(0));
  }

  void step(double lr_weights, double lr_biases) {
    detail::check_grads_finite(params_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const bool adapted = p.kind == ParamKind::kWeight;
      const double wd = adapted ? cfg_.weight_decay : 0.0;
      const double lr = adapted ? lr_weights : lr_biases;
      double local_lr = 1.0;
      if (adapted && cfg_.adapt) {
        const double wn = detail::l2_norm<T>(p.tensor.data());
        const double gn = detail::l2_norm<T>(p.tensor.grad());
        if (wn > 0.0 && gn > 0.0) local_lr = cfg_.trust_coefficient * wn / (gn + wd * wn);
      }
      auto w = p.tensor.data();
      auto g = p.tensor.grad();
      auto m = momentum_[i].data();
      const double scale = local_lr * lr;
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = T(cfg_.momentum * m[k] + scale * (g[k] + wd * w[k]));
        w[k] -= m[k];
      }
    }
  }

  const std::vector<NamedParam<T>>& params() const { return params_; }
  /// Momentum buffers in parameter order (for checkpointing).
  std::vector<Tensor<T>>& momentum_buffers() { return momentum_; }
  const LarsConfig& config() const { return cfg_; }

 private:
  LarsConfig cfg_;
  std::vector<NamedParam<T>> params_;
  std::vector<Tensor<T>> momentum_;
};

/// Bias-corrected Adam.
template <typename T>
class Adam {
 public:
  Adam(const AdamConfig& cfg, std::vector<NamedParam<T>> params) : cfg_(cfg), params_(std::move(params)) {
    if (!(cfg.beta1 > 0 && cfg.beta1 < 1 && cfg.beta2 > 0 && cfg.beta2 < 1)) {
      throw ConfigError("adam: betas must lie in (0,1)");
    }
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  void step() {
    detail::check_grads_finite(params_);
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].tensor.data();
      auto g = params_[i].tensor.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = g[k];
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
        const double mhat = m[k] / c1, vhat = v[k] / c2;
        w[k] -= T(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<NamedParam<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

template <typename T>
void zero_grads(const std::vector<NamedParam<T>>& params) {
  for (auto p : params) p.tensor.zero_grad();
}

}  // namespace delores
