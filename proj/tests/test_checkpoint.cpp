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

#include <fstream>

#include "delores/checkpoint.hpp"
#include "delores/error.hpp"
#include "delores/trainer.hpp"
#include "fixtures.hpp"

namespace delores {
namespace {

using testing_util::file_bytes;
using testing_util::fresh_dir;

Archive sample_archive() {
  Archive a;
  a.header = {{"kind", "test"}, {"n", 3}};
  const std::vector<float> f{1.5f, -0.0f, 3.25e-30f, 7.0f, 1e30f, -2.0f};
  const std::vector<double> d{0.1, 1.0 / 3.0};
  a.arrays.push_back(NamedArray::of<float>("f", {2, 3}, f));
  a.arrays.push_back(NamedArray::of<double>("d", {2}, d));
  a.arrays.push_back(NamedArray::of_bytes("b", std::string("x\0y", 3)));
  return a;
}

TEST(Archive, RoundTripIsBitExact) {
  const auto dir = fresh_dir("ckpt_rt");
  const Archive a = sample_archive();
  write_archive(dir / "a.dlrs", a);
  const Archive b = read_archive(dir / "a.dlrs");
  EXPECT_EQ(b.header, a.header);
  ASSERT_EQ(b.arrays.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(b.arrays[i].name, a.arrays[i].name);
    EXPECT_EQ(b.arrays[i].dims, a.arrays[i].dims);
    EXPECT_EQ(b.arrays[i].dtype, a.arrays[i].dtype);
    EXPECT_EQ(b.arrays[i].payload, a.arrays[i].payload);
  }
  EXPECT_EQ(b.get("b").as_bytes(), std::string("x\0y", 3));
  EXPECT_THROW(b.get("missing"), DataError);
  EXPECT_THROW(b.get("f").as<double>(), DataError);
  write_archive(dir / "c.dlrs", b);
  EXPECT_EQ(file_bytes(dir / "a.dlrs"), file_bytes(dir / "c.dlrs"));
}

TEST(Archive, MismatchedDimsRejected) {
  const std::vector<float> v{1, 2, 3};
  EXPECT_THROW(NamedArray::of<float>("x", {2, 2}, v), ShapeError);
}

class CorruptArchive : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fresh_dir("ckpt_bad");
    write_archive(dir_ / "good.dlrs", sample_archive());
    bytes_ = file_bytes(dir_ / "good.dlrs");
  }
  std::filesystem::path write(const std::string& name, const std::string& bytes) {
    std::ofstream(dir_ / name, std::ios::binary) << bytes;
    return dir_ / name;
  }
  std::filesystem::path dir_;
  std::string bytes_;
};

TEST_F(CorruptArchive, BadMagic) {
  std::string b = bytes_;
  b[0] = 'X';
  EXPECT_THROW(read_archive(write("magic.dlrs", b)), DataError);
}

TEST_F(CorruptArchive, BadVersion) {
  std::string b = bytes_;
  b[4] = 9;
  EXPECT_THROW(read_archive(write("version.dlrs", b)), DataError);
}

TEST_F(CorruptArchive, EveryTruncationFails) {
  for (std::size_t n = 0; n < bytes_.size(); ++n) {
    EXPECT_THROW(read_archive(write("trunc.dlrs", bytes_.substr(0, n))), DataError) << "length " << n;
  }
}

TEST_F(CorruptArchive, MissingFile) { EXPECT_THROW(read_archive(dir_ / "absent.dlrs"), DataError); }

TEST(PretrainCheckpoint, RestoresBitIdenticalState) {
  const RunConfig cfg = testing_util::tiny_config();
  Pretrainer p(cfg, NormStats{-5.0, 3.0}, 4);
  Rng rng(9);
  std::vector<LogMelSpectrogram> batch(8);
  for (auto& s : batch) {
    s.n_mels = 16;
    s.frames = 32;
    s.floor_value = -23.0f;
    for (std::size_t i = 0; i < 16 * 32; ++i) s.values.push_back(static_cast<float>(rng.normal() * 3 - 5));
  }
  std::vector<LogMelSpectrogram> wrong(8, batch[0]);
  for (auto& s : wrong) {
    s.frames = 16;
    s.values.resize(16 * 16);
  }
  EXPECT_THROW(p.step(wrong), ShapeError);
  p.step(batch);
  const auto dir = fresh_dir("ckpt_pre");
  write_archive(dir / "a.dlrs", p.checkpoint());
  Pretrainer q = Pretrainer::from_checkpoint(read_archive(dir / "a.dlrs"));
  write_archive(dir / "b.dlrs", q.checkpoint());
  EXPECT_EQ(file_bytes(dir / "a.dlrs"), file_bytes(dir / "b.dlrs"));
  EXPECT_EQ(q.global_step(), 1u);
  // Continuing from the restored copy matches continuing the original.
  const MetricsRecord mp = p.step(batch);
  const MetricsRecord mq = q.step(batch);
  EXPECT_EQ(mp.loss.total, mq.loss.total);
  EXPECT_EQ(mp.c_diag_mean, mq.c_diag_mean);
}

TEST(PretrainCheckpoint, DimensionMismatchIsShapeError) {
  RunConfig cfg = testing_util::tiny_config();
  Pretrainer p(cfg, NormStats{}, 4);
  Archive a = p.checkpoint();
  cfg.model.proj_dim = 48;
  a.header["config"] = to_json(cfg);
  EXPECT_THROW(Pretrainer::from_checkpoint(a), ShapeError);
}

}  // namespace
}  // namespace delores
