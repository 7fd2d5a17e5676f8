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

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "delores/augment.hpp"
#include "delores/checkpoint.hpp"
#include "delores/config.hpp"
#include "delores/data.hpp"
#include "delores/model.hpp"
#include "delores/objective.hpp"
#include "delores/optim.hpp"

namespace delores {

/// One line of the metrics log.
struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;  // weight learning rate before trust scaling
  LossBreakdown loss;
  double c_diag_mean = 0.0;
  double c_offdiag_rms = 0.0;
};

nlohmann::json to_json(const MetricsRecord& m);
MetricsRecord metrics_from_json(const nlohmann::json& j);

/// Self-supervised pretraining state: encoder, projector, LARS state, the two
/// mixup queues, and the generator driving shuffling, cropping, augmentation,
/// and dropout. Everything needed to continue a run bit-exactly.
class Pretrainer {
 public:
  Pretrainer(const RunConfig& cfg, const NormStats& norm, std::size_t steps_per_epoch);

  /// Restores a checkpoint written by checkpoint(). Throws ShapeError when the
  /// stored arrays do not match the configured model.
  static Pretrainer from_checkpoint(const Archive& archive);

  /// Augment -> encode -> project both views -> cross-correlation -> loss ->
  /// backward -> LARS update.
  MetricsRecord step(std::span<const LogMelSpectrogram> batch);

  Archive checkpoint(const std::vector<MetricsRecord>& metrics_tail = {}) const;

  const RunConfig& config() const { return cfg_; }
  const NormStats& norm_stats() const { return norm_; }
  Encoder<float>& encoder() { return encoder_; }
  Projector<float>& projector() { return projector_; }
  Rng& rng() { return rng_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t global_step() const { return global_step_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  void finish_epoch() { ++epoch_; }

 private:
  void restore(const Archive& archive);
  std::vector<NamedParam<float>> all_params() const;
  std::vector<NamedBuffer<float>> all_buffers() const;

  RunConfig cfg_;
  NormStats norm_;
  std::size_t steps_per_epoch_;
  Rng init_rng_;
  Encoder<float> encoder_;
  Projector<float> projector_;
  Lars<float> lars_;
  MixupQueue queue_a_, queue_b_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::size_t global_step_ = 0;
};

/// Copies named parameters/buffers with `prefix` from an archive into the
/// given tensors. Throws ShapeError on shape mismatch, DataError when missing.
void load_named(const Archive& archive, const std::string& prefix, std::span<const NamedParam<float>> params);
void load_named(const Archive& archive, const std::string& prefix, std::span<const NamedBuffer<float>> buffers);

struct PretrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
  bool verbose = false;
};

struct PretrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<MetricsRecord> metrics;  // steps run by this call
};

/// Full pretraining run over the manifest's train split. Writes
/// `config.json`, `metrics.jsonl` (one JSON object per step), and
/// `checkpoint_epoch_NNNN.dlrs` after every epoch into out_dir. On a numerical
/// failure `checkpoint_abort.dlrs` is written before the error propagates.
PretrainResult run_pretraining(const Manifest& manifest, const FeatureStore& store, const RunConfig& cfg,
                               const PretrainOptions& opts);

std::vector<MetricsRecord> read_metrics_log(const std::filesystem::path& path);

}  // namespace delores
