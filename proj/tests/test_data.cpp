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

#include <filesystem>
#include <fstream>
#include <set>

#include "delores/data.hpp"
#include "delores/error.hpp"

namespace delores {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("delores_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

TEST(Manifest, ParsesValidCsv) {
  const fs::path dir = temp_dir("ok");
  const Manifest m = load_manifest(write_file(dir / "m.csv",
                                              "path,label,split\n"
                                              "a.wav,dog,train\n"
                                              "b.wav,cat,val\n"
                                              "\"c,1.wav\",,test\n"));
  ASSERT_EQ(m.records.size(), 3u);
  EXPECT_EQ(m.label_map.at("cat"), 0);
  EXPECT_EQ(m.label_map.at("dog"), 1);
  EXPECT_EQ(m.records[2].path, "c,1.wav");
  EXPECT_FALSE(m.records[2].label.has_value());
  EXPECT_EQ(m.records[1].split, Split::kVal);
  EXPECT_EQ(m.resolve(m.records[0]), dir / "a.wav");
  EXPECT_EQ(m.label_of(0), 1);
  EXPECT_THROW(m.label_of(2), DataError);
}

TEST(Manifest, ColumnOrderIsFree) {
  const fs::path dir = temp_dir("order");
  const Manifest m = load_manifest(write_file(dir / "m.csv", "split,path,label\ntrain,x.wav,a\n"));
  EXPECT_EQ(m.records[0].path, "x.wav");
}

void expect_error_mentions(const fs::path& p, const std::string& needle) {
  try {
    load_manifest(p);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Manifest, ErrorsCarryLineNumbers) {
  const fs::path dir = temp_dir("bad");
  expect_error_mentions(write_file(dir / "dup.csv", "path,label,split\na.wav,x,train\nb.wav,x,train\na.wav,y,train\n"),
                        "line 4");
  expect_error_mentions(write_file(dir / "split.csv", "path,label,split\na.wav,x,holdout\n"), "line 2");
  expect_error_mentions(write_file(dir / "cols.csv", "path,label\na.wav,x\n"), "path,label,split");
  expect_error_mentions(write_file(dir / "short.csv", "path,label,split\na.wav\n"), "line 2");
  expect_error_mentions(dir / "missing.csv", "missing.csv");
  // Same path in different splits is allowed.
  EXPECT_EQ(load_manifest(write_file(dir / "ok.csv", "path,label,split\na.wav,x,train\na.wav,x,test\n")).records.size(),
            2u);
}

TEST(Manifest, WriteReadRoundTrip) {
  const fs::path dir = temp_dir("rt");
  Manifest m;
  m.records.push_back({"q\"uote.wav", std::string("a,b"), Split::kTest, 0});
  m.records.push_back({"plain.wav", std::nullopt, Split::kTrain, 0});
  write_manifest(dir / "m.csv", m);
  const Manifest back = load_manifest(dir / "m.csv");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[0].path, "q\"uote.wav");
  EXPECT_EQ(*back.records[0].label, "a,b");
  EXPECT_FALSE(back.records[1].label);
}

TEST(Synth, CountsAndLabels) {
  const fs::path dir = temp_dir("synth");
  SynthSpec spec;
  spec.classes = 4;
  spec.per_class = 50;
  spec.duration_s = 0.1;
  const Manifest m = synth_dataset(spec, dir);
  EXPECT_EQ(m.records.size(), 200u);
  EXPECT_EQ(m.num_classes(), 4u);
  std::size_t wavs = 0;
  for (const auto& e : fs::directory_iterator(dir / "audio")) wavs += e.path().extension() == ".wav";
  EXPECT_EQ(wavs, 200u);
  EXPECT_EQ(load_manifest(dir / "manifest.csv").records.size(), 200u);
  spec.classes = 1;
  EXPECT_THROW(synth_dataset(spec, dir), ConfigError);
}

TEST(Synth, SameSeedIsBitIdentical) {
  SynthSpec spec;
  spec.classes = 2;
  spec.per_class = 3;
  spec.duration_s = 0.2;
  spec.seed = 42;
  const fs::path a = temp_dir("seed_a"), b = temp_dir("seed_b");
  const Manifest ma = synth_dataset(spec, a);
  synth_dataset(spec, b);
  for (const auto& r : ma.records) EXPECT_EQ(file_bytes(a / r.path), file_bytes(b / r.path)) << r.path;
  EXPECT_EQ(file_bytes(a / "manifest.csv"), file_bytes(b / "manifest.csv"));
}

TEST(Synth, ClassesAreSeparableByMelArgmax) {
  SynthSpec spec;
  Rng rng(3);
  const DspConfig cfg;
  auto argmax_bin = [&](std::size_t cls) {
    const auto s = logmel(synth_clip(cls, spec, rng), cfg);
    std::vector<double> energy(s.n_mels, 0.0);
    for (std::size_t m = 0; m < s.n_mels; ++m)
      for (std::size_t t = 0; t < s.frames; ++t) energy[m] += s.at(m, t);
    return std::max_element(energy.begin(), energy.end()) - energy.begin();
  };
  EXPECT_NE(argmax_bin(0), argmax_bin(3));
  EXPECT_LT(argmax_bin(0), argmax_bin(3));
  EXPECT_DOUBLE_EQ(synth_base_frequency(2), 400.0);
}

TEST(Synth, NoiseLevelMatchesSnr) {
  SynthSpec spec;
  spec.duration_s = 2.0;
  Rng rng(5);
  const AudioClip clip = synth_clip(1, spec, rng);
  double peak = 0;
  for (float v : clip.samples) peak = std::max(peak, double(std::abs(v)));
  EXPECT_NEAR(peak, 0.5, 0.05);
}

class BatchFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = temp_dir("batch");
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 5;
    spec.test_per_class = 5;
    spec.duration_s = 0.5;
    manifest_ = synth_dataset(spec, dir_);
    store_.emplace(manifest_, DspConfig{});
  }
  fs::path dir_;
  Manifest manifest_;
  std::optional<FeatureStore> store_;
};

TEST_F(BatchFixture, PretrainDropsLastPartialBatch) {
  Rng rng(1);
  BatchStream s(manifest_, *store_, {Split::kTrain, 4, 32, BatchMode::kPretrain, true}, rng);
  std::vector<std::size_t> sizes;
  while (auto b = s.next()) {
    sizes.push_back(b->size());
    EXPECT_TRUE(b->labels.empty());
    EXPECT_EQ(b->features.shape(), (Shape{4, 1, 64, 32}));
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(s.num_batches(), 2u);
}

TEST_F(BatchFixture, SupervisedKeepsLastBatchAndVisitsAll) {
  Rng rng(2);
  BatchStream s(manifest_, *store_, {Split::kTest, 4, 32, BatchMode::kSupervised, true}, rng);
  std::vector<std::size_t> sizes;
  std::multiset<std::string> ids;
  while (auto b = s.next()) {
    sizes.push_back(b->size());
    EXPECT_EQ(b->labels.size(), b->size());
    ids.insert(b->ids.begin(), b->ids.end());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
  std::multiset<std::string> expected;
  for (auto i : manifest_.indices(Split::kTest)) expected.insert(manifest_.id_of(i));
  EXPECT_EQ(ids, expected);
}

TEST_F(BatchFixture, ShuffleDependsOnlyOnSeed) {
  auto order = [&](std::uint64_t seed) {
    Rng rng(seed);
    BatchStream s(manifest_, *store_, {Split::kTrain, 3, 16, BatchMode::kSupervised, true}, rng);
    std::vector<std::string> ids;
    while (auto b = s.next()) ids.insert(ids.end(), b->ids.begin(), b->ids.end());
    return ids;
  };
  EXPECT_EQ(order(7), order(7));
  EXPECT_NE(order(7), order(8));
}

TEST_F(BatchFixture, DownstreamFramesRoundsToSixteen) {
  // 0.5 s -> 1 + (8000 - 1024) / 160 = 44 frames -> 48.
  EXPECT_EQ(downstream_frames(manifest_, *store_, Split::kTrain), 48u);
}

TEST_F(BatchFixture, CacheRoundTripAndWorkerInvariance) {
  const fs::path cache = dir_ / "cache";
  const FeatureStore first(manifest_, DspConfig{}, cache, 3);
  const FeatureStore cached(manifest_, DspConfig{}, cache, 1);
  for (std::size_t i = 0; i < manifest_.records.size(); ++i) {
    EXPECT_EQ(first.at(i).values, store_->at(i).values);
    EXPECT_EQ(cached.at(i).values, store_->at(i).values);
    EXPECT_EQ(cached.num_samples(i), store_->num_samples(i));
  }
  // Entries written under other extraction parameters are recomputed.
  DspConfig wide;
  wide.n_mels = 32;
  const FeatureStore recomputed(manifest_, wide, cache, 1);
  EXPECT_EQ(recomputed.at(0).n_mels, 32u);
}

TEST_F(BatchFixture, MissingAudioNamesRecord) {
  Manifest m = manifest_;
  m.records[0].path = "audio/nope.wav";
  try {
    FeatureStore s(m, DspConfig{});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.wav"), std::string::npos);
  }
}

TEST(CenterCrop, CentersAndPads) {
  LogMelSpectrogram s{1, 6, {0, 1, 2, 3, 4, 5}, -1};
  EXPECT_EQ(center_crop(s, 2).values, (std::vector<float>{2, 3}));
  EXPECT_EQ(center_crop(s, 8).values, (std::vector<float>{0, 1, 2, 3, 4, 5, -1, -1}));
}

}  // namespace
}  // namespace delores
