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

#include "delores/error.hpp"
#include "delores/model.hpp"
#include "delores/objective.hpp"
#include "delores/optim.hpp"
#include "gradcheck.hpp"

namespace delores {
namespace {

NamedParam<double> scalar(const char* name, double w, double g, ParamKind kind) {
  Tensor<double> t({1}, w, true);
  t.grad()[0] = g;
  return {name, t, kind};
}

LarsConfig no_momentum() {
  LarsConfig c;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  return c;
}

TEST(Lars, ZeroGradientIsFixedPoint) {
  auto p = scalar("w", 2.0, 0.0, ParamKind::kWeight);
  LarsConfig cfg;
  cfg.weight_decay = 0.0;
  Lars<double> opt(cfg, {p});
  opt.step(1.0, 1.0);
  EXPECT_EQ(p.tensor[0], 2.0);
}

TEST(Lars, AdaptedScalarHandExample) {
  auto p = scalar("w", 2.0, 1.0, ParamKind::kWeight);
  Lars<double> opt(no_momentum(), {p});
  opt.step(1.0, 1.0);
  EXPECT_DOUBLE_EQ(p.tensor[0], 2.0 - 0.002);
}

TEST(Lars, BiasSkipsAdaptation) {
  auto p = scalar("b", 2.0, 1.0, ParamKind::kBias);
  LarsConfig cfg = no_momentum();
  cfg.weight_decay = 1e-6;  // not applied to biases
  Lars<double> opt(cfg, {p});
  opt.step(1.0, 0.0048);
  EXPECT_DOUBLE_EQ(p.tensor[0], 2.0 - 0.0048);
}

TEST(Lars, WithoutAdaptationAndMomentumIsSgd) {
  Rng rng(1);
  LarsConfig cfg = no_momentum();
  cfg.adapt = false;
  Tensor<double> w = testing::random_tensor({10}, rng);
  for (auto& g : w.grad()) g = rng.normal();
  const auto before = w.values();
  const std::vector<double> grad(w.grad().begin(), w.grad().end());
  Lars<double> opt(cfg, {{"w", w, ParamKind::kWeight}});
  opt.step(0.05, 0.0);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(w[i], before[i] - 0.05 * grad[i]);
}

TEST(Lars, MomentumAccumulates) {
  auto p = scalar("b", 0.0, 1.0, ParamKind::kBias);
  LarsConfig cfg;
  Lars<double> opt(cfg, {p});
  opt.step(0.0, 0.1);
  opt.step(0.0, 0.1);
  // m1 = 0.1, m2 = 0.9 * 0.1 + 0.1.
  EXPECT_NEAR(p.tensor[0], -(0.1 + 0.19), 1e-15);
}

TEST(Lars, NonFiniteGradientAbortsBeforeUpdate) {
  auto a = scalar("a", 1.0, 1.0, ParamKind::kWeight);
  auto b = scalar("b", 1.0, std::nan(""), ParamKind::kWeight);
  Lars<double> opt(LarsConfig{}, {a, b});
  EXPECT_THROW(opt.step(1.0, 1.0), NumericalError);
  EXPECT_EQ(a.tensor[0], 1.0);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
  auto p = scalar("w", 0.0, 1.0, ParamKind::kWeight);
  Adam<double> opt(AdamConfig{}, {p});
  opt.step();
  EXPECT_NEAR(p.tensor[0], -1e-3, 1e-10);
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  auto p = scalar("w", 3.0, 0.0, ParamKind::kWeight);
  Adam<double> opt(AdamConfig{}, {p});
  for (int i = 0; i < 5; ++i) opt.step();
  EXPECT_EQ(p.tensor[0], 3.0);
}

TEST(Adam, FirstStepIsScaleFree) {
  auto a = scalar("a", 0.0, 0.5, ParamKind::kWeight);
  auto b = scalar("b", 0.0, 5.0, ParamKind::kWeight);
  Adam<double> opt(AdamConfig{}, {a, b});
  opt.step();
  EXPECT_NEAR(a.tensor[0], b.tensor[0], 1e-10);
  auto c = scalar("c", 0.0, std::numeric_limits<double>::infinity(), ParamKind::kWeight);
  Adam<double> bad(AdamConfig{}, {c});
  EXPECT_THROW(bad.step(), NumericalError);
}

TEST(Schedule, WarmupAndDecay) {
  ScheduleConfig cfg;  // 10 warmup of 100 epochs
  const std::size_t spe = 7;
  const double base = 0.3;
  EXPECT_EQ(lr_at(0, spe, cfg, base), 0.0);
  EXPECT_EQ(lr_at(70, spe, cfg, base), base);
  EXPECT_NEAR(lr_at(699, spe, cfg, base), base / 1000, 1e-9);
  EXPECT_NEAR(lr_at(35, spe, cfg, base), base / 2, 1e-15);
  double prev = base;
  for (std::size_t s = 70; s < 700; ++s) {
    const double lr = lr_at(s, spe, cfg, base);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(Schedule, ContinuousAtWarmupBoundary) {
  ScheduleConfig cfg;
  const double base = 0.2;
  EXPECT_NEAR(lr_at_continuous(70 - 1e-9, 7, cfg, base), base, 1e-9);
  EXPECT_NEAR(lr_at_continuous(70 + 1e-9, 7, cfg, base), base, 1e-9);
}

TEST(Schedule, BatchScaling) { EXPECT_DOUBLE_EQ(scaled_lr(0.2, 1024), 0.8); }

TEST(Pretraining, SmallStepDecreasesLoss) {
  ModelConfig cfg;
  cfg.n_mels = 16;
  cfg.channels = 4;
  cfg.hidden = 16;
  cfg.proj_dim = 16;
  cfg.encoder_dropout = 0.0;
  cfg.projector_dropout = 0.0;
  Rng rng(7);
  Encoder<double> enc(cfg, rng);
  Projector<double> proj(cfg, rng);
  Tensor<double> xa = testing::random_tensor({8, 1, 16, 16}, rng, false);
  Tensor<double> xb = xa.clone();
  for (auto& v : xb.data()) v += 0.3 * rng.normal();
  auto params = enc.parameters();
  auto pp = proj.parameters();
  params.insert(params.end(), pp.begin(), pp.end());
  auto loss = [&](Tape<double>* tape) {
    auto za = proj.forward(enc.forward(xa, Mode::kTrain, rng, tape), Mode::kTrain, rng, tape);
    auto zb = proj.forward(enc.forward(xb, Mode::kTrain, rng, tape), Mode::kTrain, rng, tape);
    return barlow_loss(cross_correlation(za, zb, tape), kDefaultLambda, tape);
  };
  LarsConfig lc;
  lc.adapt = false;
  lc.momentum = 0.0;
  Lars<double> opt(lc, params);
  Tape<double> tape;
  auto before = loss(&tape);
  zero_grads(params);
  backward(before.total, tape);
  opt.step(1e-4, 1e-4);
  EXPECT_LT(loss(nullptr).parts.total, before.parts.total);
}

}  // namespace
}  // namespace delores
