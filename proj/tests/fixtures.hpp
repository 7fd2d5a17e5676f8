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
#include <fstream>
#include <iterator>
#include <string>

#include "delores/config.hpp"

namespace delores::testing_util {

inline std::filesystem::path fresh_dir(const std::string& name) {
  std::filesystem::path p = std::filesystem::temp_directory_path() / ("delores_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

/// Small model that pretrains in well under a second per step.
inline RunConfig tiny_config() {
  RunConfig c;
  c.dsp.n_mels = 16;
  c.dsp.pretrain_frames = 32;
  c.model.n_mels = 16;
  c.model.channels = 4;
  c.model.hidden = 16;
  c.model.proj_dim = 32;
  c.augment.queue_capacity = 64;
  c.pretrain.epochs = 2;
  c.pretrain.batch_size = 8;
  c.pretrain.keep_checkpoints = 0;
  c.schedule.warmup_epochs = 1;
  c.adam.batch_size = 8;
  c.adam.max_epochs = 5;
  return c;
}

}  // namespace delores::testing_util
