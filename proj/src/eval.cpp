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

#include "delores/eval.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "delores/config.hpp"
#include "delores/error.hpp"
#include "delores/trainer.hpp"

namespace delores {

using nlohmann::json;

const char* protocol_name(Protocol p) { return p == Protocol::kLinear ? "linear" : "finetune"; }
const char* init_name(Init i) { return i == Init::kRandom ? "random" : "pretrained"; }

json to_json(const EvalReport& r) {
  auto acc = [](const std::optional<double>& a) { return a ? json(*a) : json(nullptr); };
  return json{{"task", r.task},
              {"protocol", protocol_name(r.protocol)},
              {"init", init_name(r.init)},
              {"num_classes", r.num_classes},
              {"accuracy", {{"train", acc(r.train_accuracy)}, {"val", acc(r.val_accuracy)}, {"test", acc(r.test_accuracy)}}},
              {"epochs_run", r.epochs_run},
              {"best_epoch", r.best_epoch},
              {"selection", r.selection}};
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::size_t task_w = 4;
  for (const auto& r : reports) task_w = std::max(task_w, r.task.size());
  auto pct = [](const std::optional<double>& a) {
    if (!a) return std::string("-");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * *a);
    return std::string(buf);
  };
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %-8s  %-10s  %7s  %7s  %7s  %6s  %4s\n", static_cast<int>(task_w), "task",
                "protocol", "init", "train", "val", "test", "epochs", "best");
  os << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-*s  %-8s  %-10s  %7s  %7s  %7s  %6zu  %4zu\n", static_cast<int>(task_w),
                  r.task.c_str(), protocol_name(r.protocol), init_name(r.init), pct(r.train_accuracy).c_str(),
                  pct(r.val_accuracy).c_str(), pct(r.test_accuracy).c_str(), r.epochs_run, r.best_epoch);
    os << line;
  }
  return os.str();
}

EncoderBundle load_encoder(const Archive& checkpoint) {
  if (checkpoint.header.value("kind", "") != "pretrain") throw DataError("archive is not a pretraining checkpoint");
  const RunConfig cfg = config_from_json(checkpoint.header.at("config"));
  NormStats norm;
  norm.mean = checkpoint.header.at("norm_stats").at("mean").get<double>();
  norm.stddev = checkpoint.header.at("norm_stats").at("stddev").get<double>();
  Rng rng(0);
  EncoderBundle b{cfg.model, norm, Init::kPretrained, Encoder<float>(cfg.model, rng)};
  load_named(checkpoint, "param/", b.encoder.parameters());
  load_named(checkpoint, "buffer/", b.encoder.buffers());
  return b;
}

EncoderBundle random_encoder(const ModelConfig& model, const NormStats& norm, std::uint64_t seed) {
  Rng rng(seed);
  return EncoderBundle{model, norm, Init::kRandom, Encoder<float>(model, rng)};
}

NormStats split_norm_stats(const Manifest& manifest, const FeatureStore& store, Split split) {
  const auto idx = manifest.indices(split);
  if (idx.empty()) throw DataError(std::string("manifest has no ") + split_name(split) + " records");
  std::vector<LogMelSpectrogram> specs;
  specs.reserve(idx.size());
  for (auto i : idx) specs.push_back(store.at(i));
  return compute_norm_stats(specs);
}

Tensor<float> supervised_inputs(const Manifest& manifest, const FeatureStore& store,
                                std::span<const std::size_t> records, const NormStats& norm, std::size_t frames) {
  (void)manifest;
  std::vector<LogMelSpectrogram> specs;
  specs.reserve(records.size());
  for (auto r : records) specs.push_back(normalize(center_crop(store.at(r), frames), norm));
  return stack_spectrograms<float>(specs);
}

Tensor<float> embed(Encoder<float>& encoder, const Manifest& manifest, const FeatureStore& store,
                    std::span<const std::size_t> records, const NormStats& norm, std::size_t frames,
                    std::size_t batch_size) {
  if (records.empty()) throw DataError("no records to embed");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t hidden = encoder.config().hidden;
  Tensor<float> out({records.size(), hidden});
  Rng unused(0);
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, records.size() - start);
    const Tensor<float> x = supervised_inputs(manifest, store, records.subspan(start, n), norm, frames);
    const Tensor<float> h = encoder.forward(x, Mode::kEval, unused);
    std::copy(h.data().begin(), h.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(start * hidden));
  }
  return out;
}

namespace {

std::vector<int> labels_of(const Manifest& manifest, std::span<const std::size_t> records) {
  std::vector<int> y;
  y.reserve(records.size());
  for (auto r : records) y.push_back(manifest.label_of(r));
  return y;
}

double accuracy(const Tensor<float>& logits, const std::vector<int>& labels) {
  const auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Tensor<float> gather_rows(const Tensor<float>& m, std::span<const std::size_t> rows) {
  const std::size_t d = m.dim(1);
  Tensor<float> out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(m.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  return out;
}

std::size_t check_task(const Manifest& manifest, const EvalOptions& opts) {
  if (manifest.num_classes() < 2) {
    throw DataError("downstream manifest needs at least 2 labeled classes, found " +
                    std::to_string(manifest.num_classes()));
  }
  if (manifest.indices(Split::kTrain).empty()) throw DataError("downstream manifest has no train records");
  if (opts.adam.batch_size == 0) throw ConfigError("adam.batch_size must be positive");
  return manifest.num_classes();
}

std::size_t resolve_frames(const Manifest& manifest, const FeatureStore& store, const EvalOptions& opts) {
  return opts.frames ? opts.frames : downstream_frames(manifest, store, Split::kTrain);
}

using Snapshot = std::vector<std::vector<float>>;

template <typename Named>
Snapshot take(const std::vector<Named>& items) {
  Snapshot s;
  for (const auto& it : items) s.push_back(it.tensor.values());
  return s;
}

template <typename Named>
void put(const std::vector<Named>& items, const Snapshot& s) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor<float> t = items[i].tensor;
    t.assign(s[i]);
  }
}

const char* kSelectionVal = "best validation accuracy, earliest epoch on ties";
const char* kSelectionLast = "no validation split; final epoch reported";

}  // namespace

double evaluate(Encoder<float>& encoder, const ClassifierHead<float>& head, const Manifest& manifest,
                const FeatureStore& store, Split split, const NormStats& norm, std::size_t frames,
                std::size_t batch_size) {
  const auto idx = manifest.indices(split);
  if (idx.empty()) throw DataError(std::string("cannot evaluate on empty ") + split_name(split) + " split");
  const Tensor<float> h = embed(encoder, manifest, store, idx, norm, frames, batch_size);
  return accuracy(head.forward(h), labels_of(manifest, idx));
}

EvalReport linear_probe(EncoderBundle& bundle, const Manifest& manifest, const FeatureStore& store,
                        const EvalOptions& opts) {
  const std::size_t classes = check_task(manifest, opts);
  const std::size_t frames = resolve_frames(manifest, store, opts);
  const std::size_t hidden = bundle.model.hidden;

  struct SplitData {
    Tensor<float> h;
    std::vector<int> y;
  };
  auto load = [&](Split s) -> std::optional<SplitData> {
    const auto idx = manifest.indices(s);
    if (idx.empty()) return std::nullopt;
    return SplitData{embed(bundle.encoder, manifest, store, idx, bundle.norm, frames, opts.eval_batch_size),
                     labels_of(manifest, idx)};
  };
  const auto train = load(Split::kTrain);
  const auto val = load(Split::kVal);
  const auto test = load(Split::kTest);

  ClassifierHead<float> head(hidden, classes);
  Adam<float> adam(opts.adam, head.parameters());
  Rng rng(opts.seed);

  EvalReport report;
  report.task = opts.task;
  report.protocol = Protocol::kLinear;
  report.init = bundle.init;
  report.num_classes = classes;
  report.selection = val ? kSelectionVal : kSelectionLast;

  double best_val = val ? accuracy(head.forward(val->h), val->y) : 0.0;
  Snapshot best = take(head.parameters());
  std::vector<std::size_t> order(train->y.size());
  for (std::size_t epoch = 1; epoch <= opts.adam.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opts.adam.batch_size) {
      const std::size_t n = std::min(opts.adam.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, n);
      std::vector<int> y;
      for (auto r : rows) y.push_back(train->y[r]);
      Tape<float> tape;
      Tensor<float> loss = softmax_cross_entropy(head.forward(gather_rows(train->h, rows), &tape), y, &tape);
      zero_grads(head.parameters());
      backward(loss, tape);
      adam.step();
    }
    report.epochs_run = epoch;
    if (val) {
      const double acc = accuracy(head.forward(val->h), val->y);
      if (acc > best_val) {
        best_val = acc;
        best = take(head.parameters());
        report.best_epoch = epoch;
      }
    } else {
      best = take(head.parameters());
      report.best_epoch = epoch;
    }
  }
  put(head.parameters(), best);
  report.train_accuracy = accuracy(head.forward(train->h), train->y);
  if (val) report.val_accuracy = accuracy(head.forward(val->h), val->y);
  if (test) report.test_accuracy = accuracy(head.forward(test->h), test->y);
  return report;
}

EvalReport finetune(EncoderBundle& bundle, const Manifest& manifest, const FeatureStore& store,
                    const EvalOptions& opts) {
  const std::size_t classes = check_task(manifest, opts);
  const std::size_t frames = resolve_frames(manifest, store, opts);
  Encoder<float>& enc = bundle.encoder;
  ClassifierHead<float> head(bundle.model.hidden, classes);

  auto params = enc.parameters();
  const auto head_params = head.parameters();
  params.insert(params.end(), head_params.begin(), head_params.end());
  const auto buffers = enc.buffers();
  Adam<float> adam(opts.adam, params);
  Rng rng(opts.seed);

  const bool has_val = !manifest.indices(Split::kVal).empty();
  auto split_acc = [&](Split s) -> std::optional<double> {
    if (manifest.indices(s).empty()) return std::nullopt;
    return evaluate(enc, head, manifest, store, s, bundle.norm, frames, opts.eval_batch_size);
  };

  EvalReport report;
  report.task = opts.task;
  report.protocol = Protocol::kFinetune;
  report.init = bundle.init;
  report.num_classes = classes;
  report.selection = has_val ? kSelectionVal : kSelectionLast;

  double best_val = has_val ? *split_acc(Split::kVal) : 0.0;
  Snapshot best_params = take(params), best_buffers = take(buffers);

  BatchOptions bopts;
  bopts.split = Split::kTrain;
  bopts.batch_size = opts.adam.batch_size;
  bopts.frames = frames;
  bopts.mode = BatchMode::kSupervised;
  bopts.shuffle = true;
  for (std::size_t epoch = 1; epoch <= opts.adam.max_epochs; ++epoch) {
    BatchStream stream(manifest, store, bopts, rng);
    while (auto batch = stream.next()) {
      // Batch statistics are undefined for a single sample.
      if (batch->size() < 2) continue;
      std::vector<LogMelSpectrogram> specs;
      specs.reserve(batch->size());
      for (const auto& s : batch->specs) specs.push_back(normalize(s, bundle.norm));
      Tape<float> tape;
      const Tensor<float> h = enc.forward(stack_spectrograms<float>(specs), Mode::kTrain, rng, &tape);
      Tensor<float> loss = softmax_cross_entropy(head.forward(h, &tape), batch->labels, &tape);
      zero_grads(params);
      backward(loss, tape);
      adam.step();
    }
    report.epochs_run = epoch;
    if (has_val) {
      const double acc = *split_acc(Split::kVal);
      if (acc > best_val) {
        best_val = acc;
        best_params = take(params);
        best_buffers = take(buffers);
        report.best_epoch = epoch;
      }
    } else {
      best_params = take(params);
      best_buffers = take(buffers);
      report.best_epoch = epoch;
    }
  }
  put(params, best_params);
  put(buffers, best_buffers);
  report.train_accuracy = split_acc(Split::kTrain);
  report.val_accuracy = split_acc(Split::kVal);
  report.test_accuracy = split_acc(Split::kTest);
  return report;
}

}  // namespace delores
