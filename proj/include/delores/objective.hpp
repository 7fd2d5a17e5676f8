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
#include <span>
#include <vector>

#include "delores/ops.hpp"
#include "delores/tensor.hpp"

namespace delores {

/// Redundancy-reduction weight used when none is configured.
inline constexpr double kDefaultLambda = 0.0051;

struct LossBreakdown {
  double invariance = 0.0;
  double redundancy = 0.0;
  double lambda = kDefaultLambda;
  double total = 0.0;
};

/// Total loss as a differentiable scalar plus its decomposition.
template <typename T>
struct BarlowLoss {
  Tensor<T> total;
  LossBreakdown parts;
};

/// D x D cross-correlation between embedding columns of two views, with
/// entries C_ij = <a_i, b_j> / (|a_i| |b_j|) over the batch axis.
///
/// Columns with zero norm raise NumericalError naming the column; no epsilon is
/// added to the denominator, so a collapsed embedding fails loudly.
template <typename T>
Tensor<T> cross_correlation(const Tensor<T>& za, const Tensor<T>& zb, Tape<T>* tape = nullptr) {
  if (za.rank() != 2) throw ShapeError("cross_correlation: embeddings must be [B,D], got " + to_string(za.shape()));
  detail::expect_shape(zb.shape(), za.shape(), "cross_correlation second view");
  const std::size_t batch = za.dim(0), dim = za.dim(1);
  if (batch < 2) throw ShapeError("cross_correlation: batch must hold at least 2 samples");

  auto column_norms = [&](const Tensor<T>& z, const char* view) {
    std::vector<T> norms(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += double(z[b * dim + j]) * double(z[b * dim + j]);
      if (s == 0.0) {
        throw NumericalError(std::string("cross_correlation: column ") + std::to_string(j) + " of view " +
                             view + " has zero norm (collapsed embedding)");
      }
      norms[j] = T(std::sqrt(s));
    }
    return norms;
  };
  const std::vector<T> na = column_norms(za, "A");
  const std::vector<T> nb = column_norms(zb, "B");

  // Column-normalized copies; C = A_hat^T B_hat.
  detail::RowMat<T> ahat = detail::ConstMapMat<T>(za.data().data(), batch, dim);
  detail::RowMat<T> bhat = detail::ConstMapMat<T>(zb.data().data(), batch, dim);
  for (std::size_t j = 0; j < dim; ++j) {
    ahat.col(j) /= na[j];
    bhat.col(j) /= nb[j];
  }
  Tensor<T> c({dim, dim});
  detail::MapMat<T>(c.data().data(), dim, dim).noalias() = ahat.transpose() * bhat;
  detail::check_finite(c, "cross_correlation");

  if (detail::recording(tape, {&za, &zb})) {
    c.set_requires_grad(true);
    tape->record([=, ahat = std::move(ahat), bhat = std::move(bhat)]() mutable {
      detail::ConstMapMat<T> g(c.grad().data(), dim, dim);
      // d/dz of u = z/|z| applied to du: (du - u (u . du)) / |z|, per column.
      auto through_norm = [&](const detail::RowMat<T>& u, detail::RowMat<T> du,
                              const std::vector<T>& norms, const Tensor<T>& z) {
        auto gz = z.grad();
        for (std::size_t j = 0; j < dim; ++j) {
          const T proj = u.col(j).dot(du.col(j));
          for (std::size_t b = 0; b < batch; ++b)
            gz[b * dim + j] += (du(b, j) - u(b, j) * proj) / norms[j];
        }
      };
      if (za.requires_grad()) through_norm(ahat, bhat * g.transpose(), na, za);
      if (zb.requires_grad()) through_norm(bhat, ahat * g, nb, zb);
    });
  }
  return c;
}

/// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2.
template <typename T>
BarlowLoss<T> barlow_loss(const Tensor<T>& c, double lambda = kDefaultLambda, Tape<T>* tape = nullptr) {
  if (c.rank() != 2 || c.dim(0) != c.dim(1)) {
    throw ShapeError("barlow_loss: cross-correlation must be square, got " + to_string(c.shape()));
  }
  const std::size_t dim = c.dim(0);
  LossBreakdown parts;
  parts.lambda = lambda;
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = c[i * dim + j];
      if (i == j) {
        parts.invariance += (1.0 - v) * (1.0 - v);
      } else {
        parts.redundancy += v * v;
      }
    }
  }
  parts.total = parts.invariance + lambda * parts.redundancy;
  BarlowLoss<T> result{Tensor<T>({1}, T(parts.total)), parts};
  detail::check_finite(result.total, "barlow_loss");
  if (detail::recording(tape, {&c})) {
    result.total.set_requires_grad(true);
    tape->record([c, out = result.total, dim, lambda]() mutable {
      const T g = out.grad()[0];
      auto gc = c.grad();
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
          const T v = c[i * dim + j];
          gc[i * dim + j] += i == j ? g * T(-2) * (T(1) - v) : g * T(2 * lambda) * v;
        }
    });
  }
  return result;
}

/// Lagged sample cross-covariance of two equal-length series:
/// (1/(N-1)) sum_t (x_{t-tau} - mean_x)(y_t - mean_y), summed over the t for
/// which x_{t-tau} exists.
double signal_cross_covariance(std::span<const double> x, std::span<const double> y, long tau);

/// Cross-covariance at lag tau normalized by the zero-lag autocovariances.
double signal_cross_correlation(std::span<const double> x, std::span<const double> y, long tau);

}  // namespace delores
