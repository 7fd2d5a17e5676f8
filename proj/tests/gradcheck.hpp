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
#include <functional>
#include <string>
#include <vector>

#include "delores/ops.hpp"
#include "delores/rng.hpp"

namespace delores::testing {

constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-4;
// Gradient norm below which a tensor counts as receiving no gradient.
constexpr double kZeroGradTol = 1e-8;

inline Tensor<double> random_tensor(const Shape& shape, Rng& rng, bool requires_grad = true, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = scale * rng.normal();
  t.set_requires_grad(requires_grad);
  return t;
}

/// Tape gradient and central-difference gradient of a scalar function.
struct GradCheck {
  std::string name;
  double rel_error = 0.0;  // |analytic - numeric| / max(|analytic|, |numeric|), 2-norm over the tensor
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

/// `loss` builds the scalar on the given tape (or without tape when null).
/// Every tensor in `inputs` is checked element by element.
inline std::vector<GradCheck> grad_check(const std::function<Tensor<double>(Tape<double>*)>& loss,
                                         const std::vector<std::pair<std::string, Tensor<double>>>& inputs) {
  for (const auto& [name, t] : inputs) t.zero_grad();
  Tape<double> tape;
  Tensor<double> l = loss(&tape);
  backward(l, tape);

  std::vector<GradCheck> out;
  for (const auto& [name, t] : inputs) {
    Tensor<double> handle = t;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < handle.numel(); ++i) {
      const double orig = handle[i];
      handle[i] = orig + kFdStep;
      const double up = loss(nullptr).item();
      handle[i] = orig - kFdStep;
      const double down = loss(nullptr).item();
      handle[i] = orig;
      const double numeric = (up - down) / (2 * kFdStep);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    out.push_back({name, std::sqrt(diff2) / denom, std::sqrt(a2), std::sqrt(n2)});
  }
  return out;
}

/// Reduces any output to a scalar through a fixed random projection, so every
/// output element contributes a distinct weight.
/// Biases start at zero, which places ReLU inputs exactly on the kink
/// whenever a layer input row is all zeros. Random offsets move them off it.
inline void jitter_biases(const std::vector<std::pair<std::string, Tensor<double>>>& inputs, Rng& rng) {
  for (const auto& [name, t] : inputs) {
    if (name.ends_with(".bias")) {
      Tensor<double> handle = t;
      for (auto& v : handle.data()) v = 0.1 * rng.normal();
    }
  }
}

/// Biases consumed directly by a training-mode batch norm: the per-channel
/// mean subtraction cancels them, so their gradient is identically zero.
inline bool feeds_batch_norm(const std::string& name) {
  return name.ends_with(".bias") && (name.starts_with("encoder.conv") || name.starts_with("projector.fc"));
}

inline Tensor<double> project(const Tensor<double>& out, const Tensor<double>& weights, Tape<double>* tape) {
  return sum(mul(out, weights, tape), tape);
}

}  // namespace delores::testing
