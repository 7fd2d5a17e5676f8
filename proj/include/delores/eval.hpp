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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "delores/augment.hpp"
#include "delores/checkpoint.hpp"
#include "delores/data.hpp"
#include "delores/model.hpp"
#include "delores/optim.hpp"

namespace delores {

enum class Protocol { kLinear, kFinetune };
enum class Init { kRandom, kPretrained };

const char* protocol_name(Protocol p);
const char* init_name(Init i);

/// Outcome of one downstream run. Accuracies are in [0,1]; a split that the
/// manifest does not contain is reported as absent.
struct EvalReport {
  std::string task;
  Protocol protocol = Protocol::kLinear;
  Init init = Init::kPretrained;
  std::size_t num_classes = 0;
  std::optional<double> train_accuracy;
  std::optional<double> val_accuracy;
  std::optional<double> test_accuracy;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 0 means the untrained head
  std::string selection;
};

nlohmann::json to_json(const EvalReport& r);

/// Aligned text table, one row per report.
std::string format_table(const std::vector<EvalReport>& reports);

/// Encoder plus the input normalization it was trained with.
struct EncoderBundle {
  ModelConfig model;
  NormStats norm;
  Init init = Init::kPretrained;
  Encoder<float> encoder;
};

/// Encoder weights and normalization statistics from a pretraining checkpoint.
EncoderBundle load_encoder(const Archive& checkpoint);

/// Freshly initialized encoder normalized with the given statistics.
EncoderBundle random_encoder(const ModelConfig& model, const NormStats& norm, std::uint64_t seed);

/// Normalization statistics of a manifest split at full clip length.
NormStats split_norm_stats(const Manifest& manifest, const FeatureStore& store, Split split);

struct EvalOptions {
  std::string task = "synthetic";
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::size_t frames = 0;             // 0 selects downstream_frames of the train split
  std::size_t eval_batch_size = 64;   // forward-only batches; does not affect results
};

/// Center-cropped, normalized inputs of the given records as [N,1,F,T].
Tensor<float> supervised_inputs(const Manifest& manifest, const FeatureStore& store,
                                std::span<const std::size_t> records, const NormStats& norm, std::size_t frames);

/// Eval-mode embeddings [N, hidden] of the given records.
Tensor<float> embed(Encoder<float>& encoder, const Manifest& manifest, const FeatureStore& store,
                    std::span<const std::size_t> records, const NormStats& norm, std::size_t frames,
                    std::size_t batch_size = 64);

/// Top-1 accuracy over a split with an eval-mode forward. Throws DataError
/// when the split is empty.
double evaluate(Encoder<float>& encoder, const ClassifierHead<float>& head, const Manifest& manifest,
                const FeatureStore& store, Split split, const NormStats& norm, std::size_t frames,
                std::size_t batch_size = 64);

/// Frozen encoder, embeddings cached once, linear head trained with Adam.
/// The head with the best validation accuracy is reported (earliest on ties).
EvalReport linear_probe(EncoderBundle& bundle, const Manifest& manifest, const FeatureStore& store,
                        const EvalOptions& opts);

/// Encoder and head trained jointly with Adam; same selection rule. The
/// bundle's encoder holds the selected weights on return.
EvalReport finetune(EncoderBundle& bundle, const Manifest& manifest, const FeatureStore& store,
                    const EvalOptions& opts);

}  // namespace delores
