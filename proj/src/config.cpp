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

#include "delores/config.hpp"

#include <fstream>
#include <set>

#include "delores/error.hpp"

namespace delores {

using nlohmann::json;

namespace {

// Reads optional members of one JSON object, tracking which keys were used.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
  }

  template <typename V>
  Reader& opt(const char* key, V& out) {
    used_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception& e) {
      throw ConfigError("config " + section_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  const json* sub(const char* key) {
    used_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown config key '" + section_ + "." + k + "'");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> used_;
};

}  // namespace

void PretrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("pretrain.epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("pretrain.batch_size must be at least 2");
}

void RunConfig::validate() const {
  dsp.validate();
  augment.validate();
  pretrain.validate();
  if (model.n_mels != dsp.n_mels) throw ConfigError("model.n_mels must equal dsp.n_mels");
  if (model.n_mels % 8 != 0) throw ConfigError("model.n_mels must be a multiple of 8");
  if (dsp.pretrain_frames % 8 != 0) throw ConfigError("dsp.pretrain_frames must be a multiple of 8");
  if (model.channels == 0 || model.hidden == 0 || model.proj_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(model.encoder_dropout >= 0 && model.encoder_dropout < 1 && model.projector_dropout >= 0 &&
        model.projector_dropout < 1)) {
    throw ConfigError("dropout rates must lie in [0,1)");
  }
  if (!(lars.base_lr_weights > 0 && lars.base_lr_biases > 0)) throw ConfigError("lars learning rates must be positive");
  if (!(lars.momentum >= 0 && lars.momentum < 1)) throw ConfigError("lars.momentum must be in [0,1)");
  if (!(lars.trust_coefficient > 0 && lars.weight_decay >= 0)) throw ConfigError("lars trust/decay out of range");
  if (!(schedule.warmup_epochs >= 0 && schedule.warmup_epochs < static_cast<double>(pretrain.epochs))) {
    throw ConfigError("schedule.warmup_epochs must be below pretrain.epochs");
  }
  if (!(schedule.final_lr_fraction > 0 && schedule.final_lr_fraction <= 1)) {
    throw ConfigError("schedule.final_lr_fraction must be in (0,1]");
  }
  if (!(lambda >= 0)) throw ConfigError("lambda must be nonnegative");
  if (!(adam.lr > 0 && adam.eps > 0)) throw ConfigError("adam.lr and adam.eps must be positive");
  if (!(adam.beta1 > 0 && adam.beta1 < 1 && adam.beta2 > 0 && adam.beta2 < 1)) {
    throw ConfigError("adam betas must lie in (0,1)");
  }
  if (adam.batch_size == 0) throw ConfigError("adam.batch_size must be positive");
}

json to_json(const RunConfig& c) {
  return json{
      {"dsp",
       {{"sample_rate", c.dsp.sample_rate},
        {"window_ms", c.dsp.window_ms},
        {"hop_ms", c.dsp.hop_ms},
        {"n_mels", c.dsp.n_mels},
        {"fmin", c.dsp.fmin},
        {"fmax", c.dsp.fmax},
        {"log_floor", c.dsp.log_floor},
        {"pretrain_frames", c.dsp.pretrain_frames}}},
      {"augment",
       {{"mixup_enabled", c.augment.mixup_enabled},
        {"mixup_ratio_max", c.augment.mixup_ratio_max},
        {"queue_capacity", c.augment.queue_capacity},
        {"rrc_enabled", c.augment.rrc_enabled},
        {"rrc",
         {{"freq_min", c.augment.rrc.freq_min},
          {"freq_max", c.augment.rrc.freq_max},
          {"time_min", c.augment.rrc.time_min},
          {"time_max", c.augment.rrc.time_max},
          {"virtual_time_factor", c.augment.rrc.virtual_time_factor}}}}},
      {"model",
       {{"n_mels", c.model.n_mels},
        {"channels", c.model.channels},
        {"hidden", c.model.hidden},
        {"proj_dim", c.model.proj_dim},
        {"encoder_dropout", c.model.encoder_dropout},
        {"projector_dropout", c.model.projector_dropout}}},
      {"lars",
       {{"base_lr_weights", c.lars.base_lr_weights},
        {"base_lr_biases", c.lars.base_lr_biases},
        {"momentum", c.lars.momentum},
        {"weight_decay", c.lars.weight_decay},
        {"trust_coefficient", c.lars.trust_coefficient},
        {"adapt", c.lars.adapt}}},
      {"schedule",
       {{"warmup_epochs", c.schedule.warmup_epochs},
        {"final_lr_fraction", c.schedule.final_lr_fraction}}},
      {"lambda", c.lambda},
      {"pretrain",
       {{"epochs", c.pretrain.epochs},
        {"batch_size", c.pretrain.batch_size},
        {"seed", c.pretrain.seed},
        {"keep_checkpoints", c.pretrain.keep_checkpoints},
        {"workers", c.pretrain.workers}}},
      {"adam",
       {{"lr", c.adam.lr},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"eps", c.adam.eps},
        {"batch_size", c.adam.batch_size},
        {"max_epochs", c.adam.max_epochs}}},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Reader root(j, "root");
  if (const json* s = root.sub("dsp")) {
    Reader r(*s, "dsp");
    r.opt("sample_rate", c.dsp.sample_rate)
        .opt("window_ms", c.dsp.window_ms)
        .opt("hop_ms", c.dsp.hop_ms)
        .opt("n_mels", c.dsp.n_mels)
        .opt("fmin", c.dsp.fmin)
        .opt("fmax", c.dsp.fmax)
        .opt("log_floor", c.dsp.log_floor)
        .opt("pretrain_frames", c.dsp.pretrain_frames)
        .finish();
    // Model input height follows the filterbank unless set explicitly.
    c.model.n_mels = c.dsp.n_mels;
  }
  if (const json* s = root.sub("augment")) {
    Reader r(*s, "augment");
    r.opt("mixup_enabled", c.augment.mixup_enabled)
        .opt("mixup_ratio_max", c.augment.mixup_ratio_max)
        .opt("queue_capacity", c.augment.queue_capacity)
        .opt("rrc_enabled", c.augment.rrc_enabled);
    if (const json* rr = r.sub("rrc")) {
      Reader q(*rr, "augment.rrc");
      q.opt("freq_min", c.augment.rrc.freq_min)
          .opt("freq_max", c.augment.rrc.freq_max)
          .opt("time_min", c.augment.rrc.time_min)
          .opt("time_max", c.augment.rrc.time_max)
          .opt("virtual_time_factor", c.augment.rrc.virtual_time_factor)
          .finish();
    }
    r.finish();
  }
  if (const json* s = root.sub("model")) {
    Reader r(*s, "model");
    r.opt("n_mels", c.model.n_mels)
        .opt("channels", c.model.channels)
        .opt("hidden", c.model.hidden)
        .opt("proj_dim", c.model.proj_dim)
        .opt("encoder_dropout", c.model.encoder_dropout)
        .opt("projector_dropout", c.model.projector_dropout)
        .finish();
  }
  if (const json* s = root.sub("lars")) {
    Reader r(*s, "lars");
    r.opt("base_lr_weights", c.lars.base_lr_weights)
        .opt("base_lr_biases", c.lars.base_lr_biases)
        .opt("momentum", c.lars.momentum)
        .opt("weight_decay", c.lars.weight_decay)
        .opt("trust_coefficient", c.lars.trust_coefficient)
        .opt("adapt", c.lars.adapt)
        .finish();
  }
  if (const json* s = root.sub("schedule")) {
    Reader r(*s, "schedule");
    r.opt("warmup_epochs", c.schedule.warmup_epochs)
        .opt("final_lr_fraction", c.schedule.final_lr_fraction)
        .finish();
  }
  root.opt("lambda", c.lambda);
  if (const json* s = root.sub("pretrain")) {
    Reader r(*s, "pretrain");
    r.opt("epochs", c.pretrain.epochs)
        .opt("batch_size", c.pretrain.batch_size)
        .opt("seed", c.pretrain.seed)
        .opt("keep_checkpoints", c.pretrain.keep_checkpoints)
        .opt("workers", c.pretrain.workers)
        .finish();
  }
  if (const json* s = root.sub("adam")) {
    Reader r(*s, "adam");
    r.opt("lr", c.adam.lr)
        .opt("beta1", c.adam.beta1)
        .opt("beta2", c.adam.beta2)
        .opt("eps", c.adam.eps)
        .opt("batch_size", c.adam.batch_size)
        .opt("max_epochs", c.adam.max_epochs)
        .finish();
  }
  root.finish();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write config file " + path.string());
  os << to_json(cfg).dump(2) << '\n';
}

}  // namespace delores
