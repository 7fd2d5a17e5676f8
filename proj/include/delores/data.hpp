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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delores/dsp.hpp"
#include "delores/rng.hpp"
#include "delores/tensor.hpp"

namespace delores {

enum class Split { kTrain, kVal, kTest };

Split parse_split(const std::string& token);
const char* split_name(Split split);

struct ManifestRecord {
  std::filesystem::path path;  // as written in the manifest
  std::optional<std::string> label;
  Split split = Split::kTrain;
  std::size_t line = 0;  // 1-based line in the CSV, 0 when built in memory
};

/// Audio records with optional labels. Relative paths resolve against base_dir.
struct Manifest {
  std::vector<ManifestRecord> records;
  std::map<std::string, int> label_map;  // sorted labels -> 0..K-1
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestRecord& r) const;
  std::vector<std::size_t> indices(Split split) const;
  std::size_t num_classes() const { return label_map.size(); }
  /// Label index of a record; throws DataError for unlabeled records.
  int label_of(std::size_t record) const;
  std::string id_of(std::size_t record) const;

  /// Rebuilds label_map from the records' distinct labels.
  void rebuild_label_map();
};

/// Parses a UTF-8 CSV with header `path,label,split` (column order free).
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Synthetic K-class tone dataset. Class k is a cluster of partials around
/// 200 * 2^(k/2) Hz with +/-3% jitter, random phases, and white noise at
/// 20 dB SNR.
struct SynthSpec {
  std::size_t classes = 4;
  std::size_t per_class = 50;  // training clips per class
  std::size_t val_per_class = 0;
  std::size_t test_per_class = 0;
  double duration_s = 1.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
};

double synth_base_frequency(std::size_t cls);

/// Deterministically renders one clip of class `cls`.
AudioClip synth_clip(std::size_t cls, const SynthSpec& spec, Rng& rng);

/// Writes WAVs plus `manifest.csv` into out_dir and returns the manifest.
Manifest synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Log-mel features of every manifest record, computed once.
///
/// With a cache directory, features are read from / written to per-record
/// cache files. Worker threads fill per-record slots, so the result does not
/// depend on the worker count.
class FeatureStore {
 public:
  FeatureStore(const Manifest& manifest, const DspConfig& cfg,
               std::optional<std::filesystem::path> cache_dir = std::nullopt, unsigned workers = 1);

  const LogMelSpectrogram& at(std::size_t record) const { return specs_.at(record); }
  std::size_t num_samples(std::size_t record) const { return samples_.at(record); }
  std::size_t size() const { return specs_.size(); }
  const DspConfig& dsp() const { return cfg_; }

 private:
  DspConfig cfg_;
  std::vector<LogMelSpectrogram> specs_;
  std::vector<std::size_t> samples_;
};

/// Frames of the split's average clip duration, rounded to the nearest
/// multiple of 16 (at least 16).
std::size_t downstream_frames(const Manifest& manifest, const FeatureStore& store, Split split);

enum class BatchMode { kPretrain, kSupervised };

struct Batch {
  std::vector<LogMelSpectrogram> specs;  // [F, T_frames] crops
  Tensor<float> features;                // same crops as [B,1,F,T_frames]
  std::vector<int> labels;               // empty in pretrain mode
  std::vector<std::string> ids;
  std::vector<std::size_t> records;

  std::size_t size() const { return specs.size(); }
};

struct BatchOptions {
  Split split = Split::kTrain;
  std::size_t batch_size = 64;
  std::size_t frames = 96;
  BatchMode mode = BatchMode::kPretrain;
  bool shuffle = true;
};

/// One epoch over a split. Pretrain mode crops at random offsets and drops the
/// final partial batch; supervised mode center-crops and keeps it.
class BatchStream {
 public:
  BatchStream(const Manifest& manifest, const FeatureStore& store, const BatchOptions& opts, Rng& rng);

  std::optional<Batch> next();
  std::size_t num_batches() const;

 private:
  const Manifest& manifest_;
  const FeatureStore& store_;
  BatchOptions opts_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

/// Crops with the supervised rule: centered window, floor padding on the right.
LogMelSpectrogram center_crop(const LogMelSpectrogram& spec, std::size_t frames);

}  // namespace delores
