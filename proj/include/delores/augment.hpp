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

#include <algorithm>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "delores/dsp.hpp"
#include "delores/rng.hpp"
#include "delores/tensor.hpp"

namespace delores {

/// Scalar mean and standard deviation over all training log-mel values.
struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
};

NormStats compute_norm_stats(std::span<const LogMelSpectrogram> specs);

/// Crop-size ranges: F_c = floor(min(U(freq_min, freq_max), 1) * F),
/// T_c = floor(U(time_min, time_max) * T), placed inside a time axis widened
/// to virtual_time_factor * T.
struct RrcConfig {
  double freq_min = 0.6;
  double freq_max = 1.5;
  double time_min = 0.6;
  double time_max = 1.5;
  double virtual_time_factor = 1.5;

  void validate() const;
};

struct AugmentConfig {
  bool mixup_enabled = true;
  double mixup_ratio_max = 0.4;
  std::size_t queue_capacity = 2048;
  bool rrc_enabled = true;
  RrcConfig rrc;

  void validate() const;
};

/// (x - mean) / stddev elementwise.
LogMelSpectrogram normalize(const LogMelSpectrogram& spec, const NormStats& stats);

/// Bounded FIFO of past linear-domain spectrograms.
///
/// push() and sample() lock an internal mutex, so a queue may be shared by
/// several writers; training confines each queue to one thread anyway.
class MixupQueue {
 public:
  explicit MixupQueue(std::size_t capacity = 2048);

  MixupQueue(const MixupQueue& other);
  MixupQueue& operator=(const MixupQueue& other);

  /// Appends a linear-domain spectrogram, evicting the oldest beyond capacity.
  void push(LogMelSpectrogram linear);

  /// Uniformly drawn entry, or nullopt when empty.
  std::optional<LogMelSpectrogram> sample(Rng& rng) const;

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size() == 0; }

  /// Copy of the contents, oldest first.
  std::vector<LogMelSpectrogram> snapshot() const;
  void restore(std::vector<LogMelSpectrogram> items);

 private:
  std::size_t capacity_;
  std::deque<LogMelSpectrogram> items_;
  mutable std::mutex mu_;
};

/// log((1 - r) exp(x) + r * partner) with `partner_linear` already in the
/// linear domain.
LogMelSpectrogram mix_with(const LogMelSpectrogram& x, const LogMelSpectrogram& partner_linear, double ratio);

/// Draws a partner from the queue (identity on an empty queue) and a ratio
/// r ~ U(0, ratio_max), mixes in the linear domain, then pushes exp(x).
LogMelSpectrogram mixup(const LogMelSpectrogram& x, MixupQueue& queue, double ratio_max, Rng& rng);

/// Crop rectangle in virtual-canvas coordinates. The real spectrogram occupies
/// time columns [real_offset, real_offset + T) of the canvas.
struct CropBox {
  std::size_t freq_size = 0;
  std::size_t time_size = 0;
  std::size_t freq_offset = 0;
  std::size_t time_offset = 0;
};

std::size_t virtual_time_extent(std::size_t frames, const RrcConfig& cfg);
std::size_t real_time_offset(std::size_t frames, const RrcConfig& cfg);

CropBox draw_crop(std::size_t n_mels, std::size_t frames, const RrcConfig& cfg, Rng& rng);

/// Extracts `box` from the zero-padded canvas and resizes it back to the
/// input size with Catmull-Rom bicubic interpolation (edge-clamped).
LogMelSpectrogram resized_crop(const LogMelSpectrogram& spec, const CropBox& box, const RrcConfig& cfg);

LogMelSpectrogram random_resized_crop(const LogMelSpectrogram& spec, const RrcConfig& cfg, Rng& rng);

/// Bicubic resize of a row-major [rows, cols] grid.
std::vector<float> bicubic_resize(std::span<const float> src, std::size_t rows, std::size_t cols,
                                  std::size_t out_rows, std::size_t out_cols);

/// One augmented view: normalize -> mixup -> random resized crop.
LogMelSpectrogram augment_view(const LogMelSpectrogram& spec, const NormStats& stats, MixupQueue& queue,
                               const AugmentConfig& cfg, Rng& rng);

/// Two independently augmented views of each spectrogram, stacked as
/// [B,1,F,T] tensors. Each view branch owns its mixup queue.
std::pair<Tensor<float>, Tensor<float>> make_views(std::span<const LogMelSpectrogram> batch, const NormStats& stats,
                                                   MixupQueue& queue_a, MixupQueue& queue_b,
                                                   const AugmentConfig& cfg, Rng& rng);

/// Stacks equally sized spectrograms into a [B,1,F,T] tensor.
template <typename T>
Tensor<T> stack_spectrograms(std::span<const LogMelSpectrogram> specs) {
  if (specs.empty()) throw ShapeError("cannot stack an empty batch");
  const std::size_t f = specs[0].n_mels, t = specs[0].frames;
  Tensor<T> out({specs.size(), 1, f, t});
  for (std::size_t b = 0; b < specs.size(); ++b) {
    if (specs[b].n_mels != f || specs[b].frames != t) throw ShapeError("batch spectrograms differ in size");
    std::copy(specs[b].values.begin(), specs[b].values.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * f * t));
  }
  return out;
}

}  // namespace delores
