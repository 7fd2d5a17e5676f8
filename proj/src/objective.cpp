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

#include "delores/objective.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>

#include "delores/error.hpp"

namespace delores {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double signal_cross_covariance(std::span<const double> x, std::span<const double> y, long tau) {
  if (x.size() != y.size()) throw ShapeError("signal_cross_covariance: series lengths differ");
  const long n = static_cast<long>(x.size());
  if (n < 2) throw ShapeError("signal_cross_covariance: series need at least 2 samples");
  if (std::labs(tau) >= n) {
    throw ShapeError("signal_cross_covariance: |lag| " + std::to_string(tau) + " must be below length " +
                     std::to_string(n));
  }
  const double mx = mean_of(x), my = mean_of(y);
  double acc = 0.0;
  for (long t = 0; t < n; ++t) {
    const long s = t - tau;
    if (s < 0 || s >= n) continue;
    acc += (x[static_cast<std::size_t>(s)] - mx) * (y[static_cast<std::size_t>(t)] - my);
  }
  return acc / static_cast<double>(n - 1);
}

double signal_cross_correlation(std::span<const double> x, std::span<const double> y, long tau) {
  const double sxx = signal_cross_covariance(x, x, 0);
  const double syy = signal_cross_covariance(y, y, 0);
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericalError("signal_cross_correlation: constant series has zero variance");
  }
  return signal_cross_covariance(x, y, tau) / std::sqrt(sxx * syy);
}

}  // namespace delores
