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

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "delores/augment.hpp"
#include "delores/dsp.hpp"
#include "delores/model.hpp"
#include "delores/objective.hpp"
#include "delores/optim.hpp"

namespace delores {

struct PretrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;  // 1024 at full scale
  std::uint64_t seed = 0;
  /// Per-epoch checkpoints retained on disk; 0 keeps all of them.
  std::size_t keep_checkpoints = 2;
  unsigned workers = 1;  // feature extraction threads

  void validate() const;
};

/// Complete configuration tree. Serialized as JSON; see README for the schema.
struct RunConfig {
  DspConfig dsp;
  AugmentConfig augment;
  ModelConfig model;
  LarsConfig lars;
  ScheduleConfig schedule;
  double lambda = kDefaultLambda;
  PretrainConfig pretrain;
  AdamConfig adam;

  /// Schedule whose length is the pretraining run (schedule.total_epochs is
  /// not read from config files).
  ScheduleConfig effective_schedule() const {
    ScheduleConfig s = schedule;
    s.total_epochs = static_cast<double>(pretrain.epochs);
    return s;
  }

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);

/// Fills a RunConfig from JSON, starting from defaults. Unknown keys are
/// rejected so typos surface as ConfigError.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace delores
