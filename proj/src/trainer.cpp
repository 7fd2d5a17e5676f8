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

#include "delores/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "delores/error.hpp"

namespace delores {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const MetricsRecord& m) {
  return json{{"step", m.step},
              {"epoch", m.epoch},
              {"lr", m.lr},
              {"invariance", m.loss.invariance},
              {"redundancy", m.loss.redundancy},
              {"total", m.loss.total},
              {"c_diag_mean", m.c_diag_mean},
              {"c_offdiag_rms", m.c_offdiag_rms}};
}

MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord m;
  m.step = j.at("step").get<std::size_t>();
  m.epoch = j.at("epoch").get<std::size_t>();
  m.lr = j.at("lr").get<double>();
  m.loss.invariance = j.at("invariance").get<double>();
  m.loss.redundancy = j.at("redundancy").get<double>();
  m.loss.total = j.at("total").get<double>();
  m.c_diag_mean = j.value("c_diag_mean", 0.0);
  m.c_offdiag_rms = j.value("c_offdiag_rms", 0.0);
  return m;
}

namespace {

template <typename Named>
void load_into(const Archive& archive, const std::string& prefix, const Named& item) {
  const NamedArray& a = archive.get(prefix + item.name);
  Tensor<float> t = item.tensor;
  if (a.dims != t.shape()) {
    throw ShapeError("checkpoint shape mismatch for " + item.name + ": stored " + to_string(a.dims) + ", model has " +
                     to_string(t.shape()));
  }
  const auto values = a.template as<float>();
  std::copy(values.begin(), values.end(), t.data().begin());
}

double l2(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += double(x) * x;
  return std::sqrt(s);
}

}  // namespace

void load_named(const Archive& archive, const std::string& prefix, std::span<const NamedParam<float>> params) {
  for (const auto& p : params) load_into(archive, prefix, p);
}

void load_named(const Archive& archive, const std::string& prefix, std::span<const NamedBuffer<float>> buffers) {
  for (const auto& b : buffers) load_into(archive, prefix, b);
}

Pretrainer::Pretrainer(const RunConfig& cfg, const NormStats& norm, std::size_t steps_per_epoch)
    : cfg_(cfg),
      norm_(norm),
      steps_per_epoch_(steps_per_epoch),
      init_rng_(cfg.pretrain.seed),
      encoder_(cfg.model, init_rng_),
      projector_(cfg.model, init_rng_),
      lars_(cfg.lars, all_params()),
      queue_a_(cfg.augment.queue_capacity),
      queue_b_(cfg.augment.queue_capacity),
      rng_(init_rng_.fork()) {
  cfg_.validate();
  if (steps_per_epoch_ == 0) throw ConfigError("pretraining needs at least one full batch per epoch");
}

std::vector<NamedParam<float>> Pretrainer::all_params() const {
  auto p = encoder_.parameters();
  auto q = projector_.parameters();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

std::vector<NamedBuffer<float>> Pretrainer::all_buffers() const {
  auto b = encoder_.buffers();
  auto c = projector_.buffers();
  b.insert(b.end(), c.begin(), c.end());
  return b;
}

MetricsRecord Pretrainer::step(std::span<const LogMelSpectrogram> batch) {
  for (const auto& spec : batch) {
    if (spec.n_mels != cfg_.dsp.n_mels || spec.frames != cfg_.dsp.pretrain_frames) {
      throw ShapeError("pretraining step expects [" + std::to_string(cfg_.dsp.n_mels) + ", " +
                       std::to_string(cfg_.dsp.pretrain_frames) + "] crops, got [" + std::to_string(spec.n_mels) +
                       ", " + std::to_string(spec.frames) + "]");
    }
  }
  const Mode train = Mode::kTrain;
  std::ostringstream diag;
  try {
    auto [xa, xb] = make_views(batch, norm_, queue_a_, queue_b_, cfg_.augment, rng_);
    Tape<float> tape;
    Tensor<float> ha = encoder_.forward(xa, train, rng_, &tape);
    Tensor<float> hb = encoder_.forward(xb, train, rng_, &tape);
    diag << " |h_A|=" << l2(ha.data()) << " |h_B|=" << l2(hb.data());
    Tensor<float> za = projector_.forward(ha, train, rng_, &tape);
    Tensor<float> zb = projector_.forward(hb, train, rng_, &tape);
    diag << " |z_A|=" << l2(za.data()) << " |z_B|=" << l2(zb.data());
    Tensor<float> c = cross_correlation(za, zb, &tape);
    const auto [cmin, cmax] = std::minmax_element(c.data().begin(), c.data().end());
    diag << " C in [" << *cmin << ", " << *cmax << "]";
    BarlowLoss<float> loss = barlow_loss(c, cfg_.lambda, &tape);
    if (!std::isfinite(loss.parts.total)) throw NumericalError("non-finite loss");

    const auto params = lars_.params();
    zero_grads(params);
    backward(loss.total, tape);

    const ScheduleConfig sched = cfg_.effective_schedule();
    const double lr_w = lr_at(global_step_, steps_per_epoch_, sched,
                              scaled_lr(cfg_.lars.base_lr_weights, cfg_.pretrain.batch_size));
    const double lr_b = lr_at(global_step_, steps_per_epoch_, sched,
                              scaled_lr(cfg_.lars.base_lr_biases, cfg_.pretrain.batch_size));
    lars_.step(lr_w, lr_b);

    MetricsRecord m;
    m.step = global_step_;
    m.epoch = epoch_;
    m.lr = lr_w;
    m.loss = loss.parts;
    const std::size_t d = c.dim(0);
    double diag_sum = 0.0, off_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double v = c[i * d + j];
        if (i == j) {
          diag_sum += v;
        } else {
          off_sq += v * v;
        }
      }
    m.c_diag_mean = diag_sum / static_cast<double>(d);
    m.c_offdiag_rms = d > 1 ? std::sqrt(off_sq / static_cast<double>(d * (d - 1))) : 0.0;
    ++global_step_;
    return m;
  } catch (const NumericalError& e) {
    throw NumericalError("pretraining step " + std::to_string(global_step_) + " aborted: " + e.what() +
                         "; diagnostics:" + diag.str());
  }
}

Archive Pretrainer::checkpoint(const std::vector<MetricsRecord>& metrics_tail) const {
  Archive ar;
  json tail = json::array();
  for (const auto& m : metrics_tail) tail.push_back(to_json(m));
  ar.header = json{{"kind", "pretrain"},
                   {"config", to_json(cfg_)},
                   {"epoch", epoch_},
                   {"global_step", global_step_},
                   {"steps_per_epoch", steps_per_epoch_},
                   {"norm_stats", {{"mean", norm_.mean}, {"stddev", norm_.stddev}}},
                   {"metrics_tail", tail}};
  for (const auto& p : all_params())
    ar.arrays.push_back(NamedArray::of<float>("param/" + p.name, p.tensor.shape(), p.tensor.data()));
  for (const auto& b : all_buffers())
    ar.arrays.push_back(NamedArray::of<float>("buffer/" + b.name, b.tensor.shape(), b.tensor.data()));
  const auto params = lars_.params();
  auto& momentum = const_cast<Lars<float>&>(lars_).momentum_buffers();
  for (std::size_t i = 0; i < params.size(); ++i)
    ar.arrays.push_back(NamedArray::of<float>("optim/momentum/" + params[i].name, momentum[i].shape(),
                                              momentum[i].data()));
  auto queue_array = [&](const char* name, const MixupQueue& q) {
    const auto items = q.snapshot();
    NamedArray a;
    a.name = name;
    a.dtype = DType::kF32;
    a.dims = {items.size(), cfg_.dsp.n_mels, cfg_.dsp.pretrain_frames};
    for (const auto& s : items) {
      const auto* bytes = reinterpret_cast<const std::uint8_t*>(s.values.data());
      a.payload.insert(a.payload.end(), bytes, bytes + s.values.size() * sizeof(float));
    }
    return a;
  };
  ar.arrays.push_back(queue_array("augment/queue_a", queue_a_));
  ar.arrays.push_back(queue_array("augment/queue_b", queue_b_));
  ar.arrays.push_back(NamedArray::of_bytes("rng/state", rng_.serialize()));
  return ar;
}

void Pretrainer::restore(const Archive& ar) {
  load_named(ar, "param/", all_params());
  load_named(ar, "buffer/", all_buffers());
  const auto params = lars_.params();
  auto& momentum = lars_.momentum_buffers();
  for (std::size_t i = 0; i < params.size(); ++i) {
    load_named(ar, "optim/momentum/", std::vector<NamedBuffer<float>>{{params[i].name, momentum[i]}});
  }
  auto restore_queue = [&](const char* name, MixupQueue& q) {
    const NamedArray& a = ar.get(name);
    const std::size_t f = cfg_.dsp.n_mels, t = cfg_.dsp.pretrain_frames;
    if (a.dims.size() != 3 || a.dims[1] != f || a.dims[2] != t) {
      throw ShapeError(std::string("checkpoint shape mismatch for ") + name + ": stored " + to_string(a.dims));
    }
    const auto values = a.as<float>();
    std::vector<LogMelSpectrogram> items(a.dims[0]);
    for (std::size_t i = 0; i < items.size(); ++i) {
      items[i].n_mels = f;
      items[i].frames = t;
      items[i].floor_value = cfg_.dsp.floor_value();
      items[i].values.assign(values.begin() + static_cast<std::ptrdiff_t>(i * f * t),
                             values.begin() + static_cast<std::ptrdiff_t>((i + 1) * f * t));
    }
    q.restore(std::move(items));
  };
  restore_queue("augment/queue_a", queue_a_);
  restore_queue("augment/queue_b", queue_b_);
  rng_.deserialize(ar.get("rng/state").as_bytes());
  epoch_ = ar.header.at("epoch").get<std::size_t>();
  global_step_ = ar.header.at("global_step").get<std::size_t>();
}

Pretrainer Pretrainer::from_checkpoint(const Archive& archive) {
  if (archive.header.value("kind", "") != "pretrain") throw DataError("archive is not a pretraining checkpoint");
  const RunConfig cfg = config_from_json(archive.header.at("config"));
  NormStats norm;
  norm.mean = archive.header.at("norm_stats").at("mean").get<double>();
  norm.stddev = archive.header.at("norm_stats").at("stddev").get<double>();
  Pretrainer p(cfg, norm, archive.header.at("steps_per_epoch").get<std::size_t>());
  p.restore(archive);
  return p;
}

std::vector<MetricsRecord> read_metrics_log(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open metrics log " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(metrics_from_json(json::parse(line)));
  }
  return out;
}

PretrainResult run_pretraining(const Manifest& manifest, const FeatureStore& store, const RunConfig& cfg,
                               const PretrainOptions& opts) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + opts.out_dir.string() + ": " + ec.message());
  save_config(opts.out_dir / "config.json", cfg);

  const auto train_idx = manifest.indices(Split::kTrain);
  if (train_idx.empty()) throw DataError("manifest has no training records");
  const std::size_t steps_per_epoch = train_idx.size() / cfg.pretrain.batch_size;
  if (steps_per_epoch == 0) {
    throw ConfigError("pretrain.batch_size " + std::to_string(cfg.pretrain.batch_size) + " exceeds the " +
                      std::to_string(train_idx.size()) + " training clips");
  }

  std::optional<Pretrainer> trainer;
  std::vector<MetricsRecord> history;  // feeds the checkpoint metrics tail
  if (opts.resume_from) {
    const Archive archive = read_archive(*opts.resume_from);
    trainer.emplace(Pretrainer::from_checkpoint(archive));
    for (const auto& j : archive.header.value("metrics_tail", json::array())) history.push_back(metrics_from_json(j));
    if (!(trainer->config().model == cfg.model)) {
      throw ShapeError("resume checkpoint was trained with different model dimensions");
    }
  } else {
    std::vector<LogMelSpectrogram> specs;
    specs.reserve(train_idx.size());
    for (auto i : train_idx) specs.push_back(store.at(i));
    trainer.emplace(cfg, compute_norm_stats(specs), steps_per_epoch);
  }

  // Keep log lines that precede the resume point; rewrite the rest.
  const fs::path log_path = opts.out_dir / "metrics.jsonl";
  std::vector<std::string> kept;
  if (opts.resume_from && fs::exists(log_path)) {
    std::ifstream is(log_path);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && json::parse(line).at("step").get<std::size_t>() < trainer->global_step()) kept.push_back(line);
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write metrics log " + log_path.string());
  for (const auto& line : kept) log << line << '\n';

  PretrainResult result;
  std::vector<fs::path> written;
  auto tail = [&]() {
    const std::size_t n = std::min<std::size_t>(history.size(), 100);
    return std::vector<MetricsRecord>(history.end() - static_cast<std::ptrdiff_t>(n), history.end());
  };

  BatchOptions bopts;
  bopts.split = Split::kTrain;
  bopts.batch_size = cfg.pretrain.batch_size;
  bopts.frames = cfg.dsp.pretrain_frames;
  bopts.mode = BatchMode::kPretrain;
  bopts.shuffle = true;

  while (trainer->epoch() < cfg.pretrain.epochs) {
    BatchStream stream(manifest, store, bopts, trainer->rng());
    while (auto batch = stream.next()) {
      MetricsRecord m;
      try {
        m = trainer->step(batch->specs);
      } catch (const NumericalError&) {
        write_archive(opts.out_dir / "checkpoint_abort.dlrs", trainer->checkpoint(tail()));
        throw;
      }
      log << to_json(m).dump() << '\n';
      log.flush();
      if (opts.verbose) {
        std::cerr << "epoch " << m.epoch << " step " << m.step << " loss " << m.loss.total << " lr " << m.lr << '\n';
      }
      result.metrics.push_back(m);
      history.push_back(m);
    }
    trainer->finish_epoch();
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%04zu.dlrs", trainer->epoch());
    const fs::path path = opts.out_dir / name;
    write_archive(path, trainer->checkpoint(tail()));
    written.push_back(path);
    result.final_checkpoint = path;
    if (cfg.pretrain.keep_checkpoints > 0 && written.size() > cfg.pretrain.keep_checkpoints) {
      fs::remove(written.front(), ec);
      written.erase(written.begin());
    }
  }
  if (result.final_checkpoint.empty()) {
    // Resumed at or past the final epoch: persist the restored state as-is.
    result.final_checkpoint = opts.out_dir / "checkpoint_final.dlrs";
    write_archive(result.final_checkpoint, trainer->checkpoint(tail()));
  }
  return result;
}

}  // namespace delores
