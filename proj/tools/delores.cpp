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

// delores: pretraining, downstream evaluation, and dataset tooling.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 data error,
// 3 numerical abort.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "delores/checkpoint.hpp"
#include "delores/config.hpp"
#include "delores/data.hpp"
#include "delores/error.hpp"
#include "delores/eval.hpp"
#include "delores/trainer.hpp"

namespace fs = std::filesystem;
using namespace delores;

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("DELORES_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t pos = 0;
    const unsigned long long s = std::stoull(v, &pos);
    if (pos != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ConfigError(std::string("DELORES_SEED must be a nonnegative integer, got '") + v + "'");
  }
}

// Flag > DELORES_SEED > config file > default.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t from_config) {
  if (flag) return *flag;
  if (auto e = env_seed()) return *e;
  return from_config;
}

RunConfig base_config(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw DataError("write failed for " + path.string());
}

struct CommonData {
  std::string manifest;
  std::string config;
  std::string cache_dir;
  unsigned workers = 1;
};

void add_data_options(CLI::App* cmd, CommonData& d) {
  cmd->add_option("--manifest", d.manifest, "CSV manifest with columns path,label,split")->required();
  cmd->add_option("--config", d.config, "JSON run configuration (flags override file values)");
  cmd->add_option("--cache-dir", d.cache_dir, "Directory for cached log-mel features");
  cmd->add_option("--workers", d.workers, "Feature extraction threads")->capture_default_str();
}

FeatureStore make_store(const Manifest& m, const DspConfig& dsp, const CommonData& d) {
  std::optional<fs::path> cache;
  if (!d.cache_dir.empty()) cache = d.cache_dir;
  return FeatureStore(m, dsp, cache, std::max(1u, d.workers));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised audio representation learning with decorrelated embeddings"};
  app.require_subcommand(1);
  app.get_formatter()->column_width(36);

  // synth
  SynthSpec synth;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic labeled tone dataset and its manifest");
  c_synth->add_option("--classes", synth.classes, "Number of classes (>= 2)")->capture_default_str();
  c_synth->add_option("--per-class", synth.per_class, "Train clips per class")->capture_default_str();
  c_synth->add_option("--val-per-class", synth.val_per_class, "Validation clips per class")->capture_default_str();
  c_synth->add_option("--test-per-class", synth.test_per_class, "Test clips per class")->capture_default_str();
  c_synth->add_option("--duration", synth.duration_s, "Clip duration in seconds")->capture_default_str();
  c_synth->add_option("--out-dir", synth_out, "Output directory")->required();
  c_synth->add_option("--seed", synth_seed, "Random seed (default: DELORES_SEED or 0)");

  // pretrain
  CommonData pre;
  std::string pre_out, pre_resume;
  std::optional<std::uint64_t> pre_seed;
  std::optional<std::size_t> pre_epochs, pre_batch;
  bool pre_verbose = false;
  auto* c_pre = app.add_subcommand("pretrain", "Self-supervised pretraining on the manifest's train split");
  add_data_options(c_pre, pre);
  c_pre->add_option("--out-dir", pre_out, "Directory for checkpoints, metrics log, and config snapshot")->required();
  c_pre->add_option("--seed", pre_seed, "Random seed (default: DELORES_SEED, then config)");
  c_pre->add_option("--epochs", pre_epochs, "Pretraining epochs (default: config, 100)");
  c_pre->add_option("--batch-size", pre_batch, "Pretraining batch size (default: config, 64)");
  c_pre->add_option("--resume", pre_resume, "Continue from a checkpoint written by an earlier run");
  c_pre->add_flag("--verbose", pre_verbose, "Print per-step loss to stderr");

  // probe / finetune
  struct EvalArgs {
    CommonData data;
    std::string checkpoint;
    bool random_init = false;
    std::string out;
    std::string task = "task";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch;
  };
  EvalArgs probe_args, fine_args;
  auto add_eval = [&](const char* name, const char* help, EvalArgs& a) {
    auto* cmd = app.add_subcommand(name, help);
    add_data_options(cmd, a.data);
    auto* ck = cmd->add_option("--checkpoint", a.checkpoint, "Pretraining checkpoint to initialize the encoder");
    auto* ri = cmd->add_flag("--random-init", a.random_init, "Use a randomly initialized encoder");
    ck->excludes(ri);
    ri->excludes(ck);
    cmd->add_option("--out", a.out, "Report JSON path")->required();
    cmd->add_option("--task", a.task, "Task name recorded in the report")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Random seed (default: DELORES_SEED, then config)");
    cmd->add_option("--epochs", a.epochs, "Maximum training epochs (default: config, 100)");
    cmd->add_option("--batch-size", a.batch, "Training batch size (default: config, 64)");
    return cmd;
  };
  auto* c_probe = add_eval("probe", "Linear evaluation on frozen embeddings", probe_args);
  auto* c_fine = add_eval("finetune", "End-to-end fine-tuning of encoder and classifier", fine_args);

  // extract
  CommonData ext;
  std::string ext_ckpt, ext_out;
  std::size_t ext_batch = 64, ext_frames = 0;
  auto* c_ext = app.add_subcommand("extract", "Write eval-mode embeddings for every manifest record");
  add_data_options(c_ext, ext);
  c_ext->add_option("--checkpoint", ext_ckpt, "Pretraining checkpoint")->required();
  c_ext->add_option("--out", ext_out, "Output array archive")->required();
  c_ext->add_option("--batch-size", ext_batch, "Forward batch size (does not affect results)")->capture_default_str();
  c_ext->add_option("--frames", ext_frames, "Input frames per clip (0: rounded mean of the train split)")
      ->capture_default_str();

  // inspect
  std::string insp_path;
  auto* c_insp = app.add_subcommand("inspect", "Summarize a checkpoint or array archive");
  c_insp->add_option("path", insp_path, "Archive file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (c_synth->parsed()) {
      synth.seed = resolve_seed(synth_seed, 0);
      const Manifest m = synth_dataset(synth, synth_out);
      std::cout << "wrote " << m.records.size() << " clips and manifest.csv to " << synth_out << '\n';
      return 0;
    }

    if (c_pre->parsed()) {
      RunConfig cfg = base_config(pre.config);
      cfg.pretrain.seed = resolve_seed(pre_seed, cfg.pretrain.seed);
      if (pre_epochs) cfg.pretrain.epochs = *pre_epochs;
      if (pre_batch) cfg.pretrain.batch_size = *pre_batch;
      cfg.pretrain.workers = pre.workers;
      cfg.validate();
      const Manifest m = load_manifest(pre.manifest);
      const FeatureStore store = make_store(m, cfg.dsp, pre);
      PretrainOptions opts;
      opts.out_dir = pre_out;
      if (!pre_resume.empty()) opts.resume_from = pre_resume;
      opts.verbose = pre_verbose;
      const PretrainResult r = run_pretraining(m, store, cfg, opts);
      if (!r.metrics.empty()) {
        std::cout << "steps " << r.metrics.size() << ", final loss " << r.metrics.back().loss.total << '\n';
      }
      std::cout << "checkpoint " << r.final_checkpoint.string() << '\n';
      return 0;
    }

    for (auto [cmd, a, proto] : {std::tuple{c_probe, &probe_args, Protocol::kLinear},
                                 std::tuple{c_fine, &fine_args, Protocol::kFinetune}}) {
      if (!cmd->parsed()) continue;
      if (a->checkpoint.empty() == !a->random_init) {
        throw ConfigError("exactly one of --checkpoint and --random-init is required");
      }
      RunConfig cfg = base_config(a->data.config);
      EvalOptions eo;
      eo.task = a->task;
      eo.adam = cfg.adam;
      if (a->epochs) eo.adam.max_epochs = *a->epochs;
      if (a->batch) eo.adam.batch_size = *a->batch;
      eo.seed = resolve_seed(a->seed, cfg.pretrain.seed);
      cfg.adam = eo.adam;
      cfg.pretrain.seed = eo.seed;

      std::optional<Archive> ckpt;
      if (!a->random_init) {
        ckpt = read_archive(a->checkpoint);
        // The encoder must see features computed exactly as during pretraining.
        cfg.dsp = config_from_json(ckpt->header.at("config")).dsp;
        cfg.model = config_from_json(ckpt->header.at("config")).model;
      }
      cfg.validate();
      const Manifest m = load_manifest(a->data.manifest);
      const FeatureStore store = make_store(m, cfg.dsp, a->data);
      EncoderBundle bundle = ckpt ? load_encoder(*ckpt)
                                  : random_encoder(cfg.model, split_norm_stats(m, store, Split::kTrain), eo.seed);
      const EvalReport report =
          proto == Protocol::kLinear ? linear_probe(bundle, m, store, eo) : finetune(bundle, m, store, eo);
      write_json(a->out, to_json(report));
      fs::path snapshot = a->out;
      snapshot.replace_extension(".config.json");
      save_config(snapshot, cfg);
      std::cout << format_table({report});
      return 0;
    }

    if (c_ext->parsed()) {
      const Archive ckpt = read_archive(ext_ckpt);
      const RunConfig cfg = config_from_json(ckpt.header.at("config"));
      const Manifest m = load_manifest(ext.manifest);
      const FeatureStore store = make_store(m, cfg.dsp, ext);
      EncoderBundle bundle = load_encoder(ckpt);
      const std::size_t frames = ext_frames ? ext_frames : downstream_frames(m, store, Split::kTrain);
      std::vector<std::size_t> all(m.records.size());
      std::iota(all.begin(), all.end(), std::size_t{0});
      const Tensor<float> h = embed(bundle.encoder, m, store, all, bundle.norm, frames, ext_batch);
      Archive out;
      nlohmann::json ids = nlohmann::json::array();
      for (auto i : all) ids.push_back(m.id_of(i));
      out.header = {{"kind", "embeddings"}, {"frames", frames}, {"ids", ids}, {"checkpoint", fs::path(ext_ckpt).filename().string()}};
      out.arrays.push_back(NamedArray::of<float>("embeddings", h.shape(), h.data()));
      write_archive(ext_out, out);
      std::cout << "wrote " << h.dim(0) << " x " << h.dim(1) << " embeddings to " << ext_out << '\n';
      return 0;
    }

    if (c_insp->parsed()) {
      const Archive ar = read_archive(insp_path);
      std::cout << "kind: " << ar.header.value("kind", "unknown") << '\n';
      for (const char* key : {"epoch", "global_step", "steps_per_epoch"}) {
        if (ar.header.contains(key)) std::cout << key << ": " << ar.header.at(key).dump() << '\n';
      }
      if (ar.header.contains("norm_stats")) std::cout << "norm_stats: " << ar.header.at("norm_stats").dump() << '\n';
      if (ar.header.contains("config")) std::cout << "model: " << ar.header.at("config").at("model").dump() << '\n';
      std::size_t params = 0;
      for (const auto& a : ar.arrays) {
        if (a.name.rfind("param/encoder.", 0) == 0) params += numel_of(a.dims);
      }
      if (params) std::cout << "encoder parameters: " << params << '\n';
      std::cout << "arrays: " << ar.arrays.size() << '\n';
      for (const auto& a : ar.arrays) std::cout << "  " << a.name << " " << to_string(a.dims) << '\n';
      if (ar.header.contains("metrics_tail") && !ar.header.at("metrics_tail").empty()) {
        std::cout << "last metrics: " << ar.header.at("metrics_tail").back().dump() << '\n';
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: malformed archive header: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
