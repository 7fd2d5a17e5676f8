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

#include <gtest/gtest.h>

#include <numeric>

#include "delores/error.hpp"
#include "delores/objective.hpp"
#include "gradcheck.hpp"

namespace delores {
namespace {

Tensor<double> mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor<double>({r, c}, std::move(v)); }

TEST(CrossCorrelation, HandExample) {
  Tensor<double> c = cross_correlation(mat(2, 2, {1, 1, -1, -1}), mat(2, 2, {1, -1, -1, 1}));
  const std::vector<double> expected{1, -1, 1, -1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(c[i], expected[i], 1e-15);
}

TEST(CrossCorrelation, SelfCorrelationHasUnitDiagonal) {
  Rng rng(1);
  Tensor<double> z = testing::random_tensor({9, 6}, rng, false);
  Tensor<double> c = cross_correlation(z, z);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(c[i * 6 + i], 1.0, 1e-6);
  for (double v : c.data()) EXPECT_LE(std::abs(v), 1.0 + 1e-6);
}

TEST(CrossCorrelation, OrthogonalColumnsGiveZero) {
  Tensor<double> c = cross_correlation(mat(2, 1, {1, 1}), mat(2, 1, {1, -1}));
  EXPECT_NEAR(c.item(), 0.0, 1e-15);
}

TEST(CrossCorrelation, ZeroColumnIsNamed) {
  try {
    cross_correlation(mat(2, 2, {1, 0, 2, 0}), mat(2, 2, {1, 1, 2, 3}));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("column 1"), std::string::npos);
  }
  EXPECT_THROW(cross_correlation(mat(1, 2, {1, 1}), mat(1, 2, {1, 1})), ShapeError);
}

TEST(CrossCorrelation, BatchPermutationInvariance) {
  Rng rng(2);
  Tensor<double> za = testing::random_tensor({8, 5}, rng, false);
  Tensor<double> zb = testing::random_tensor({8, 5}, rng, false);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0u);
  rng.shuffle(perm);
  Tensor<double> pa({8, 5}), pb({8, 5});
  for (std::size_t b = 0; b < 8; ++b)
    for (std::size_t j = 0; j < 5; ++j) {
      pa[b * 5 + j] = za[perm[b] * 5 + j];
      pb[b * 5 + j] = zb[perm[b] * 5 + j];
    }
  Tensor<double> c1 = cross_correlation(za, zb), c2 = cross_correlation(pa, pb);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(c1[i], c2[i], 1e-12);
}

TEST(CrossCorrelation, PositiveColumnScalingInvariance) {
  Rng rng(3);
  Tensor<double> za = testing::random_tensor({8, 5}, rng, false);
  Tensor<double> zb = testing::random_tensor({8, 5}, rng, false);
  Tensor<double> scaled = za.clone();
  for (std::size_t b = 0; b < 8; ++b) scaled[b * 5 + 2] *= 3.7;
  Tensor<double> c1 = cross_correlation(za, zb), c2 = cross_correlation(scaled, zb);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(c1[i], c2[i], 1e-12);
}

TEST(BarlowLoss, IdentityIsZero) {
  Tensor<double> eye({3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  EXPECT_EQ(barlow_loss(eye).parts.total, 0.0);
}

TEST(BarlowLoss, HandExample) {
  const auto r = barlow_loss(mat(2, 2, {1, -1, 1, -1}), 0.0051);
  EXPECT_EQ(r.parts.invariance, 4.0);
  EXPECT_EQ(r.parts.redundancy, 2.0);
  EXPECT_NEAR(r.parts.total, 4.0102, 1e-9);
  EXPECT_EQ(r.total.item(), r.parts.total);
}

TEST(BarlowLoss, AllOnesClosedForm) {
  const std::size_t d = 5;
  const auto r = barlow_loss(Tensor<double>({d, d}, 1.0), 0.5);
  EXPECT_EQ(r.parts.invariance, 0.0);
  EXPECT_EQ(r.parts.redundancy, double(d * d - d));
  EXPECT_DOUBLE_EQ(r.parts.total, r.parts.invariance + 0.5 * r.parts.redundancy);
  EXPECT_THROW(barlow_loss(Tensor<double>({2, 3}, 0.0)), ShapeError);
}

TEST(BarlowLoss, NonNegativeOnRandomCorrelations) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> c = cross_correlation(testing::random_tensor({6, 4}, rng, false),
                                         testing::random_tensor({6, 4}, rng, false));
    EXPECT_GT(barlow_loss(c).parts.total, 0.0);
  }
}

TEST(GradCheck, LossThroughCrossCorrelation) {
  Rng rng(5);
  Tensor<double> za = testing::random_tensor({8, 16}, rng);
  Tensor<double> zb = testing::random_tensor({8, 16}, rng);
  auto checks = testing::grad_check(
      [&](Tape<double>* t) { return barlow_loss(cross_correlation(za, zb, t), kDefaultLambda, t).total; },
      {{"Z_A", za}, {"Z_B", zb}});
  for (const auto& c : checks) EXPECT_LT(c.rel_error, testing::kFdRelTol) << c.name;
}

TEST(SignalCrossCovariance, Examples) {
  const std::vector<double> x{1, 2, 3}, y{2, 4, 6};
  EXPECT_DOUBLE_EQ(signal_cross_covariance(x, y, 0), 2.0);
  EXPECT_DOUBLE_EQ(signal_cross_covariance(x, x, 0), 1.0);
  const std::vector<double> flat{4, 4, 4};
  for (long tau : {-2L, -1L, 0L, 1L, 2L}) EXPECT_EQ(signal_cross_covariance(flat, y, tau), 0.0);
  EXPECT_THROW(signal_cross_covariance(x, y, 3), Error);
  EXPECT_THROW(signal_cross_covariance(x, y, -3), Error);
}

TEST(SignalCrossCovariance, LagTruncatesSum) {
  // tau = 1: sum over t = 1..2 of (x[t-1] - 2)(y[t] - 4) / 2 = ((-1)(0) + (0)(2)) / 2.
  const std::vector<double> x{1, 2, 3}, y{2, 4, 6};
  EXPECT_DOUBLE_EQ(signal_cross_covariance(x, y, 1), 0.0);
  // tau = -1: t = 0..1 of (x[t+1] - 2)(y[t] - 4) / 2 = (0 + 1*0) / 2.
  EXPECT_DOUBLE_EQ(signal_cross_covariance(x, y, -1), 0.0);
  const std::vector<double> a{1, 3, 2, 5};
  // mean 2.75; tau = 1: (a0-m)(a1-m) + (a1-m)(a2-m) + (a2-m)(a3-m), over 3.
  const double m = 2.75;
  const double expected = ((1 - m) * (3 - m) + (3 - m) * (2 - m) + (2 - m) * (5 - m)) / 3.0;
  EXPECT_NEAR(signal_cross_covariance(a, a, 1), expected, 1e-15);
}

TEST(SignalCrossCorrelation, Examples) {
  const std::vector<double> x{1, 2, 3, 7, -2};
  std::vector<double> neg(x.size()), affine(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    neg[i] = -x[i];
    affine[i] = 2.5 * x[i] - 4.0;
  }
  EXPECT_NEAR(signal_cross_correlation(x, x, 0), 1.0, 1e-15);
  EXPECT_NEAR(signal_cross_correlation(x, neg, 0), -1.0, 1e-15);
  EXPECT_NEAR(signal_cross_correlation(x, affine, 0), 1.0, 1e-15);
  EXPECT_NEAR(signal_cross_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}, 0), 1.0, 1e-15);
  EXPECT_THROW(signal_cross_correlation(std::vector<double>{1, 1, 1}, x, 0), Error);
}

}  // namespace
}  // namespace delores
