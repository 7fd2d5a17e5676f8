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

#include "delores/augment.hpp"

#include <algorithm>
#include <cmath>

#include "delores/error.hpp"

namespace delores {

NormStats compute_norm_stats(std::span<const LogMelSpectrogram> specs) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : specs) {
    for (const float v : s.values) {
      sum += v;
      sq += static_cast<double>(v) * v;
    }
    n += s.values.size();
  }
  if (n < 2) throw DataError("normalization statistics need at least two values");
  NormStats st;
  st.mean = sum / static_cast<double>(n);
  st.stddev = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - st.mean * st.mean));
  if (!(st.stddev > 0.0)) throw DataError("training features have zero variance");
  return st;
}

void RrcConfig::validate() const {
  if (!(freq_min > 0 && freq_min <= freq_max)) throw ConfigError("rrc: need 0 < freq_min <= freq_max");
  if (!(time_min > 0 && time_min <= time_max)) throw ConfigError("rrc: need 0 < time_min <= time_max");
  if (!(virtual_time_factor >= 1.0)) throw ConfigError("rrc: virtual_time_factor must be >= 1");
  if (time_max > virtual_time_factor) throw ConfigError("rrc: time_max cannot exceed virtual_time_factor");
}

void AugmentConfig::validate() const {
  if (!(mixup_ratio_max >= 0 && mixup_ratio_max < 1)) throw ConfigError("augment: mixup_ratio_max must be in [0,1)");
  if (queue_capacity == 0) throw ConfigError("augment: queue_capacity must be positive");
  rrc.validate();
}

LogMelSpectrogram normalize(const LogMelSpectrogram& spec, const NormStats& stats) {
  if (!(stats.stddev > 0.0)) throw ConfigError("normalize: standard deviation must be positive");
  LogMelSpectrogram out = spec;
  for (auto& v : out.values) v = static_cast<float>((v - stats.mean) / stats.stddev);
  return out;
}

MixupQueue::MixupQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("mixup queue capacity must be positive");
}

MixupQueue::MixupQueue(const MixupQueue& other) : capacity_(other.capacity_) {
  std::lock_guard lock(other.mu_);
  items_ = other.items_;
}

MixupQueue& MixupQueue::operator=(const MixupQueue& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  capacity_ = other.capacity_;
  items_ = other.items_;
  return *this;
}

void MixupQueue::push(LogMelSpectrogram linear) {
  std::lock_guard lock(mu_);
  items_.push_back(std::move(linear));
  while (items_.size() > capacity_) items_.pop_front();
}

std::optional<LogMelSpectrogram> MixupQueue::sample(Rng& rng) const {
  std::lock_guard lock(mu_);
  if (items_.empty()) return std::nullopt;
  return items_[static_cast<std::size_t>(rng.below(items_.size()))];
}

std::size_t MixupQueue::size() const {
  std::lock_guard lock(mu_);
  return items_.size();
}

std::vector<LogMelSpectrogram> MixupQueue::snapshot() const {
  std::lock_guard lock(mu_);
  return {items_.begin(), items_.end()};
}

void MixupQueue::restore(std::vector<LogMelSpectrogram> items) {
  std::lock_guard lock(mu_);
  if (items.size() > capacity_) throw DataError("mixup queue snapshot exceeds capacity");
  items_.assign(std::make_move_iterator(items.begin()), std::make_move_iterator(items.end()));
}

LogMelSpectrogram mix_with(const LogMelSpectrogram& x, const LogMelSpectrogram& partner_linear, double ratio) {
  if (x.n_mels != partner_linear.n_mels || x.frames != partner_linear.frames) {
    throw ShapeError("mixup: partner is [" + std::to_string(partner_linear.n_mels) + ", " +
                     std::to_string(partner_linear.frames) + "] but input is [" + std::to_string(x.n_mels) + ", " +
                     std::to_string(x.frames) + "]");
  }
  LogMelSpectrogram out = x;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const double mixed = (1.0 - ratio) * std::exp(static_cast<double>(x.values[i])) + ratio * partner_linear.values[i];
    out.values[i] = static_cast<float>(std::log(mixed));
  }
  return out;
}

LogMelSpectrogram mixup(const LogMelSpectrogram& x, MixupQueue& queue, double ratio_max, Rng& rng) {
  LogMelSpectrogram out = x;
  if (auto partner = queue.sample(rng)) {
    const double ratio = rng.uniform(0.0, ratio_max);
    out = mix_with(x, *partner, ratio);
  }
  LogMelSpectrogram linear = x;
  for (auto& v : linear.values) v = static_cast<float>(std::exp(static_cast<double>(v)));
  queue.push(std::move(linear));
  return out;
}

std::size_t virtual_time_extent(std::size_t frames, const RrcConfig& cfg) {
  return static_cast<std::size_t>(std::floor(cfg.virtual_time_factor * static_cast<double>(frames)));
}

std::size_t real_time_offset(std::size_t frames, const RrcConfig& cfg) {
  return (virtual_time_extent(frames, cfg) - frames) / 2;
}

CropBox draw_crop(std::size_t n_mels, std::size_t frames, const RrcConfig& cfg, Rng& rng) {
  cfg.validate();
  if (n_mels < 4 || frames < 4) throw ShapeError("random_resized_crop: spectrogram must be at least 4x4");
  CropBox box;
  box.freq_size = static_cast<std::size_t>(
      std::floor(std::min(rng.uniform(cfg.freq_min, cfg.freq_max), 1.0) * static_cast<double>(n_mels)));
  box.time_size =
      static_cast<std::size_t>(std::floor(rng.uniform(cfg.time_min, cfg.time_max) * static_cast<double>(frames)));
  if (box.freq_size < 1 || box.time_size < 1) {
    throw ConfigError("random_resized_crop: crop ranges yield an empty crop for a " + std::to_string(n_mels) + "x" +
                      std::to_string(frames) + " input");
  }
  const std::size_t canvas = virtual_time_extent(frames, cfg);
  box.time_size = std::min(box.time_size, canvas);
  box.freq_offset = static_cast<std::size_t>(rng.below(n_mels - box.freq_size + 1));
  box.time_offset = static_cast<std::size_t>(rng.below(canvas - box.time_size + 1));
  return box;
}

namespace {

double catmull_rom(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

// Resamples a strided 1-D signal of length n_in to n_out points.
void resize_line(const double* in, std::size_t n_in, std::size_t in_stride, double* out, std::size_t n_out,
                 std::size_t out_stride) {
  const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
  const long last = static_cast<long>(n_in) - 1;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    double acc = 0.0;
    for (int k = -1; k <= 2; ++k) {
      const long idx = std::clamp(static_cast<long>(base) + k, 0L, last);
      acc += catmull_rom(t - k) * in[static_cast<std::size_t>(idx) * in_stride];
    }
    out[i * out_stride] = acc;
  }
}

}  // namespace

std::vector<float> bicubic_resize(std::span<const float> src, std::size_t rows, std::size_t cols,
                                  std::size_t out_rows, std::size_t out_cols) {
  std::vector<double> in(src.begin(), src.end());
  std::vector<double> tmp(rows * out_cols);
  for (std::size_t r = 0; r < rows; ++r) resize_line(in.data() + r * cols, cols, 1, tmp.data() + r * out_cols, out_cols, 1);
  std::vector<double> res(out_rows * out_cols);
  for (std::size_t c = 0; c < out_cols; ++c) resize_line(tmp.data() + c, rows, out_cols, res.data() + c, out_rows, out_cols);
  return {res.begin(), res.end()};
}

LogMelSpectrogram resized_crop(const LogMelSpectrogram& spec, const CropBox& box, const RrcConfig& cfg) {
  const std::size_t canvas = virtual_time_extent(spec.frames, cfg);
  const std::size_t offset = real_time_offset(spec.frames, cfg);
  if (box.freq_size < 1 || box.time_size < 1 || box.freq_offset + box.freq_size > spec.n_mels ||
      box.time_offset + box.time_size > canvas) {
    throw ShapeError("resized_crop: crop box lies outside the virtual canvas");
  }
  std::vector<float> crop(box.freq_size * box.time_size, 0.0f);
  for (std::size_t f = 0; f < box.freq_size; ++f) {
    for (std::size_t t = 0; t < box.time_size; ++t) {
      const std::size_t ct = box.time_offset + t;
      if (ct < offset || ct >= offset + spec.frames) continue;  // zero padding outside the real region
      crop[f * box.time_size + t] = spec.at(box.freq_offset + f, ct - offset);
    }
  }
  LogMelSpectrogram out = spec;
  out.values = bicubic_resize(crop, box.freq_size, box.time_size, spec.n_mels, spec.frames);
  return out;
}

LogMelSpectrogram random_resized_crop(const LogMelSpectrogram& spec, const RrcConfig& cfg, Rng& rng) {
  return resized_crop(spec, draw_crop(spec.n_mels, spec.frames, cfg, rng), cfg);
}

LogMelSpectrogram augment_view(const LogMelSpectrogram& spec, const NormStats& stats, MixupQueue& queue,
                               const AugmentConfig& cfg, Rng& rng) {
  LogMelSpectrogram v = normalize(spec, stats);
  if (cfg.mixup_enabled) v = mixup(v, queue, cfg.mixup_ratio_max, rng);
  if (cfg.rrc_enabled) v = random_resized_crop(v, cfg.rrc, rng);
  return v;
}

std::pair<Tensor<float>, Tensor<float>> make_views(std::span<const LogMelSpectrogram> batch, const NormStats& stats,
                                                   MixupQueue& queue_a, MixupQueue& queue_b,
                                                   const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<LogMelSpectrogram> va, vb;
  va.reserve(batch.size());
  vb.reserve(batch.size());
  for (const auto& spec : batch) {
    va.push_back(augment_view(spec, stats, queue_a, cfg, rng));
    vb.push_back(augment_view(spec, stats, queue_b, cfg, rng));
  }
  return {stack_spectrograms<float>(va), stack_spectrograms<float>(vb)};
}

}  // namespace delores
