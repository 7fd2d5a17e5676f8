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

#include "delores/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "delores/augment.hpp"
#include "delores/error.hpp"

namespace delores {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("manifest line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

Split parse_split(const std::string& token) {
  if (token == "train") return Split::kTrain;
  if (token == "val") return Split::kVal;
  if (token == "test") return Split::kTest;
  throw DataError("unknown split '" + token + "' (expected train, val, or test)");
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

fs::path Manifest::resolve(const ManifestRecord& r) const {
  return r.path.is_absolute() ? r.path : base_dir / r.path;
}

std::vector<std::size_t> Manifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

int Manifest::label_of(std::size_t record) const {
  const auto& r = records.at(record);
  if (!r.label) throw DataError("record " + r.path.string() + " has no label");
  const auto it = label_map.find(*r.label);
  if (it == label_map.end()) throw DataError("label '" + *r.label + "' missing from label map");
  return it->second;
}

std::string Manifest::id_of(std::size_t record) const { return records.at(record).path.generic_string(); }

void Manifest::rebuild_label_map() {
  std::set<std::string> labels;
  for (const auto& r : records)
    if (r.label) labels.insert(*r.label);
  label_map.clear();
  int idx = 0;
  for (const auto& l : labels) label_map[l] = idx++;
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  int col_path = -1, col_label = -1, col_split = -1;
  std::set<std::pair<Split, std::string>> seen;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (col_path < 0) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const std::string name = trim(fields[i]);
        if (name == "path") col_path = static_cast<int>(i);
        if (name == "label") col_label = static_cast<int>(i);
        if (name == "split") col_split = static_cast<int>(i);
      }
      if (col_path < 0 || col_label < 0 || col_split < 0) {
        throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                        ": header must contain path,label,split");
      }
      continue;
    }
    const std::size_t need = static_cast<std::size_t>(std::max({col_path, col_label, col_split})) + 1;
    if (fields.size() < need) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": expected " +
                      std::to_string(need) + " columns, got " + std::to_string(fields.size()));
    }
    ManifestRecord r;
    r.line = line_no;
    const std::string p = trim(fields[static_cast<std::size_t>(col_path)]);
    if (p.empty()) throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": empty path");
    r.path = p;
    const std::string label = trim(fields[static_cast<std::size_t>(col_label)]);
    if (!label.empty()) r.label = label;
    try {
      r.split = parse_split(trim(fields[static_cast<std::size_t>(col_split)]));
    } catch (const DataError& e) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.emplace(r.split, p).second) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) + ": duplicate path '" + p +
                      "' in split " + split_name(r.split));
    }
    m.records.push_back(std::move(r));
  }
  if (col_path < 0) throw DataError("manifest " + path.string() + " is empty (header required)");
  m.rebuild_label_map();
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest " + path.string());
  os << "path,label,split\n";
  for (const auto& r : manifest.records) {
    os << csv_field(r.path.generic_string()) << ',' << csv_field(r.label.value_or("")) << ',' << split_name(r.split)
       << '\n';
  }
  if (!os) throw DataError("failed writing manifest " + path.string());
}

double synth_base_frequency(std::size_t cls) { return 200.0 * std::pow(2.0, static_cast<double>(cls) / 2.0); }

AudioClip synth_clip(std::size_t cls, const SynthSpec& spec, Rng& rng) {
  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  clip.samples.assign(n, 0.0f);
  const double jitter = rng.uniform(0.97, 1.03);
  const double f0 = synth_base_frequency(cls) * jitter;
  // Quarter-tone cluster around the base frequency.
  std::vector<double> tone(n, 0.0);
  for (int m = -1; m <= 1; ++m) {
    const double f = f0 * std::pow(2.0, m / 24.0);
    const double amp = rng.uniform(0.5, 1.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i)
      tone[i] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / spec.sample_rate + phase);
  }
  double peak = 0.0, power = 0.0;
  for (double v : tone) {
    peak = std::max(peak, std::abs(v));
    power += v * v;
  }
  const double gain = peak > 0 ? 0.5 / peak : 0.0;
  power = power * gain * gain / static_cast<double>(n);
  const double noise_std = std::sqrt(power / 100.0);  // 20 dB SNR
  for (std::size_t i = 0; i < n; ++i) {
    const double v = tone[i] * gain + noise_std * rng.normal();
    clip.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return clip;
}

Manifest synth_dataset(const SynthSpec& spec, const fs::path& out_dir) {
  if (spec.classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (spec.per_class == 0) throw ConfigError("synthetic dataset needs at least one clip per class");
  if (!(spec.duration_s > 0)) throw ConfigError("synthetic clip duration must be positive");
  std::error_code ec;
  fs::create_directories(out_dir / "audio", ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  Manifest m;
  m.base_dir = out_dir;
  Rng rng(spec.seed);
  const std::pair<Split, std::size_t> plan[] = {
      {Split::kTrain, spec.per_class}, {Split::kVal, spec.val_per_class}, {Split::kTest, spec.test_per_class}};
  for (const auto& [split, count] : plan) {
    for (std::size_t k = 0; k < spec.classes; ++k) {
      for (std::size_t i = 0; i < count; ++i) {
        Rng clip_rng = rng.fork();
        const AudioClip clip = synth_clip(k, spec, clip_rng);
        char name[96];
        std::snprintf(name, sizeof(name), "audio/%s_class%zu_%04zu.wav", split_name(split), k, i);
        write_wav(out_dir / name, clip);
        ManifestRecord r;
        r.path = name;
        r.label = "class" + std::to_string(k);
        r.split = split;
        m.records.push_back(std::move(r));
      }
    }
  }
  m.rebuild_label_map();
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

FeatureStore::FeatureStore(const Manifest& manifest, const DspConfig& cfg, std::optional<fs::path> cache_dir,
                           unsigned workers)
    : cfg_(cfg), specs_(manifest.records.size()), samples_(manifest.records.size()) {
  cfg.validate();
  if (cache_dir) fs::create_directories(*cache_dir);
  const std::size_t n = manifest.records.size();
  std::vector<std::string> errors(n);

  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < n; i += step) {
      try {
        const fs::path audio = manifest.resolve(manifest.records[i]);
        std::optional<fs::path> cached;
        if (cache_dir) {
          std::string key = manifest.id_of(i);
          std::replace_if(key.begin(), key.end(), [](char c) { return c == '/' || c == '\\' || c == ':'; }, '_');
          cached = *cache_dir / (key + "." + split_name(manifest.records[i].split) + ".dlfc");
        }
        if (cached && fs::exists(*cached)) {
          if (auto hit = load_feature_cache(*cached, cfg_)) {
            specs_[i] = std::move(hit->spec);
            samples_[i] = hit->num_samples;
            continue;
          }
        }
        const AudioClip clip = load_audio(audio, cfg_.sample_rate);
        samples_[i] = clip.samples.size();
        specs_[i] = logmel(clip, cfg_);
        if (cached) save_feature_cache(*cached, {specs_[i], samples_[i]}, cfg_);
      } catch (const std::exception& e) {
        errors[i] = "record " + manifest.id_of(i) + ": " + e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, workers);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  for (const auto& e : errors)
    if (!e.empty()) throw DataError(e);
}

std::size_t downstream_frames(const Manifest& manifest, const FeatureStore& store, Split split) {
  const auto idx = manifest.indices(split);
  if (idx.empty()) throw DataError(std::string("split ") + split_name(split) + " is empty");
  double total = 0.0;
  for (auto i : idx) total += static_cast<double>(store.num_samples(i));
  const auto avg = static_cast<std::size_t>(std::llround(total / static_cast<double>(idx.size())));
  const std::size_t frames = std::max<std::size_t>(1, frame_count(avg, store.dsp()));
  const auto rounded = static_cast<std::size_t>(std::llround(static_cast<double>(frames) / 16.0)) * 16;
  return std::max<std::size_t>(16, rounded);
}

LogMelSpectrogram center_crop(const LogMelSpectrogram& spec, std::size_t frames) {
  LogMelSpectrogram out;
  out.n_mels = spec.n_mels;
  out.frames = frames;
  out.floor_value = spec.floor_value;
  out.values.assign(spec.n_mels * frames, spec.floor_value);
  const std::size_t start = spec.frames > frames ? (spec.frames - frames) / 2 : 0;
  const std::size_t copy = std::min(frames, spec.frames);
  for (std::size_t m = 0; m < spec.n_mels; ++m)
    std::copy_n(spec.values.begin() + static_cast<std::ptrdiff_t>(m * spec.frames + start), copy,
                out.values.begin() + static_cast<std::ptrdiff_t>(m * frames));
  return out;
}

BatchStream::BatchStream(const Manifest& manifest, const FeatureStore& store, const BatchOptions& opts, Rng& rng)
    : manifest_(manifest), store_(store), opts_(opts), rng_(rng), order_(manifest.indices(opts.split)) {
  if (opts.batch_size == 0) throw ConfigError("batch size must be positive");
  if (order_.empty()) throw DataError(std::string("split ") + split_name(opts.split) + " is empty");
  if (opts.shuffle) rng_.shuffle(order_);
}

std::size_t BatchStream::num_batches() const {
  const std::size_t n = order_.size();
  return opts_.mode == BatchMode::kPretrain ? n / opts_.batch_size : (n + opts_.batch_size - 1) / opts_.batch_size;
}

std::optional<Batch> BatchStream::next() {
  const std::size_t remaining = order_.size() - pos_;
  if (remaining == 0) return std::nullopt;
  if (opts_.mode == BatchMode::kPretrain && remaining < opts_.batch_size) return std::nullopt;
  const std::size_t take = std::min(remaining, opts_.batch_size);
  Batch b;
  for (std::size_t k = 0; k < take; ++k) {
    const std::size_t rec = order_[pos_ + k];
    const LogMelSpectrogram& full = store_.at(rec);
    b.specs.push_back(opts_.mode == BatchMode::kPretrain ? crop_frames(full, opts_.frames, rng_)
                                                         : center_crop(full, opts_.frames));
    if (opts_.mode == BatchMode::kSupervised) b.labels.push_back(manifest_.label_of(rec));
    b.ids.push_back(manifest_.id_of(rec));
    b.records.push_back(rec);
  }
  pos_ += take;
  b.features = stack_spectrograms<float>(b.specs);
  return b;
}

}  // namespace delores
