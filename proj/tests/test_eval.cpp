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
#include "delores/eval.hpp"
#include "delores/trainer.hpp"
#include "fixtures.hpp"

namespace delores {
namespace {

using testing_util::tiny_config;

class EvalTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 6;
    spec.val_per_class = 3;
    spec.test_per_class = 3;
    spec.duration_s = 0.3;
    spec.seed = 17;
    manifest_ = new Manifest(synth_dataset(spec, testing_util::fresh_dir("eval_data")));
    store_ = new FeatureStore(*manifest_, tiny_config().dsp);
  }
  static void TearDownTestSuite() {
    delete store_;
    delete manifest_;
  }

  static EncoderBundle bundle(std::uint64_t seed = 3) {
    return random_encoder(tiny_config().model, split_norm_stats(*manifest_, *store_, Split::kTrain), seed);
  }
  static EvalOptions options(std::size_t epochs) {
    EvalOptions o;
    o.adam = tiny_config().adam;
    o.adam.max_epochs = epochs;
    o.seed = 4;
    return o;
  }

  static Manifest* manifest_;
  static FeatureStore* store_;
};

Manifest* EvalTest::manifest_ = nullptr;
FeatureStore* EvalTest::store_ = nullptr;

std::vector<std::vector<float>> snapshot(const Encoder<float>& enc) {
  std::vector<std::vector<float>> out;
  for (const auto& p : enc.parameters()) out.push_back(p.tensor.values());
  for (const auto& b : enc.buffers()) out.push_back(b.tensor.values());
  return out;
}

TEST_F(EvalTest, ConstantHeadScoresClassFrequency) {
  auto b = bundle();
  ClassifierHead<float> head(b.model.hidden, 4);
  head.parameters()[1].tensor.data()[2] = 1.0f;  // bias favours class 2
  const double acc = evaluate(b.encoder, head, *manifest_, *store_, Split::kTest, b.norm, 32);
  EXPECT_DOUBLE_EQ(acc, 0.25);
}

TEST_F(EvalTest, ZeroEpochProbeIsChance) {
  auto b = bundle();
  const EvalReport r = linear_probe(b, *manifest_, *store_, options(0));
  EXPECT_DOUBLE_EQ(*r.test_accuracy, 0.25);
  EXPECT_DOUBLE_EQ(*r.train_accuracy, 0.25);
  EXPECT_EQ(r.epochs_run, 0u);
  EXPECT_EQ(r.best_epoch, 0u);
}

TEST_F(EvalTest, EmbeddingIgnoresBatchSize) {
  auto b = bundle();
  const auto idx = manifest_->indices(Split::kTrain);
  const Tensor<float> ref = embed(b.encoder, *manifest_, *store_, idx, b.norm, 32, 64);
  for (std::size_t bs : {1u, 7u}) {
    EXPECT_EQ(embed(b.encoder, *manifest_, *store_, idx, b.norm, 32, bs).values(), ref.values()) << bs;
  }
}

TEST_F(EvalTest, ProbeLeavesEncoderUntouched) {
  auto b = bundle();
  const auto before = snapshot(b.encoder);
  const EvalReport r = linear_probe(b, *manifest_, *store_, options(3));
  EXPECT_EQ(snapshot(b.encoder), before);
  EXPECT_EQ(r.epochs_run, 3u);
  for (auto acc : {r.train_accuracy, r.val_accuracy, r.test_accuracy}) {
    ASSERT_TRUE(acc);
    EXPECT_GE(*acc, 0.0);
    EXPECT_LE(*acc, 1.0);
  }
}

TEST_F(EvalTest, ProbeIsDeterministic) {
  auto a = bundle(), b = bundle();
  const EvalReport ra = linear_probe(a, *manifest_, *store_, options(4));
  const EvalReport rb = linear_probe(b, *manifest_, *store_, options(4));
  EXPECT_EQ(to_json(ra), to_json(rb));
}

TEST_F(EvalTest, ProbeLearnsSeparableTones) {
  auto b = bundle();
  const EvalReport r = linear_probe(b, *manifest_, *store_, options(60));
  EXPECT_GT(*r.train_accuracy, 0.5);
}

TEST_F(EvalTest, FinetuneUpdatesEncoderAndIsDeterministic) {
  auto a = bundle(), b = bundle();
  const auto before = snapshot(a.encoder);
  const EvalReport ra = finetune(a, *manifest_, *store_, options(2));
  const EvalReport rb = finetune(b, *manifest_, *store_, options(2));
  EXPECT_EQ(to_json(ra), to_json(rb));
  EXPECT_EQ(ra.protocol, Protocol::kFinetune);
  EXPECT_LE(ra.best_epoch, 2u);
  if (ra.best_epoch > 0) {
    EXPECT_NE(snapshot(a.encoder), before);
  }
  for (auto acc : {ra.train_accuracy, ra.val_accuracy, ra.test_accuracy}) {
    EXPECT_GE(*acc, 0.0);
    EXPECT_LE(*acc, 1.0);
  }
}

TEST_F(EvalTest, MissingValSplitReportsLastEpoch) {
  Manifest m = *manifest_;
  std::erase_if(m.records, [](const ManifestRecord& r) { return r.split == Split::kVal; });
  const FeatureStore store(m, tiny_config().dsp);
  auto b = bundle();
  const EvalReport r = linear_probe(b, m, store, options(2));
  EXPECT_FALSE(r.val_accuracy);
  EXPECT_EQ(r.best_epoch, 2u);
  EXPECT_TRUE(to_json(r)["accuracy"]["val"].is_null());
}

TEST_F(EvalTest, EmptySplitIsDataError) {
  Manifest m = *manifest_;
  std::erase_if(m.records, [](const ManifestRecord& r) { return r.split == Split::kTest; });
  const FeatureStore store(m, tiny_config().dsp);
  auto b = bundle();
  ClassifierHead<float> head(b.model.hidden, 4);
  EXPECT_THROW(evaluate(b.encoder, head, m, store, Split::kTest, b.norm, 32), DataError);
}

TEST_F(EvalTest, PretrainedCheckpointLoads) {
  const RunConfig cfg = tiny_config();
  Pretrainer p(cfg, NormStats{-4.0, 2.5}, 1);
  const EncoderBundle b = load_encoder(p.checkpoint());
  EXPECT_EQ(b.init, Init::kPretrained);
  EXPECT_EQ(b.norm.mean, -4.0);
  EXPECT_EQ(snapshot(b.encoder), snapshot(p.encoder()));
}

TEST(EvalReportFormat, TableAndJson) {
  EvalReport r;
  r.task = "synth";
  r.num_classes = 4;
  r.train_accuracy = 1.0;
  r.test_accuracy = 0.8125;
  r.epochs_run = 5;
  r.best_epoch = 5;
  const std::string table = format_table({r});
  EXPECT_NE(table.find("81.2"), std::string::npos) << table;
  EXPECT_NE(table.find("linear"), std::string::npos);
  const auto j = to_json(r);
  EXPECT_EQ(j["accuracy"]["test"], 0.8125);
  EXPECT_TRUE(j["accuracy"]["val"].is_null());
  EXPECT_EQ(j["init"], "pretrained");
}

}  // namespace
}  // namespace delores
