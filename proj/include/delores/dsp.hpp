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

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "delores/rng.hpp"

namespace delores {

/// Mono audio with samples in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct DspConfig {
  int sample_rate = 16000;
  double window_ms = 64.0;
  double hop_ms = 10.0;
  std::size_t n_mels = 64;
  double fmin = 60.0;
  double fmax = 7800.0;
  double log_floor = 1e-10;
  std::size_t pretrain_frames = 96;

  std::size_t window_length() const;  // samples, 1024 at defaults
  std::size_t hop_length() const;     // samples, 160 at defaults
  std::size_t fft_size() const;       // next power of two >= window_length
  float floor_value() const;          // log(log_floor) as stored in spectrograms

  /// Throws ConfigError when the configuration is inconsistent.
  void validate() const;
};

/// Log mel power spectrogram stored row-major as [n_mels, frames].
struct LogMelSpectrogram {
  std::size_t n_mels = 0;
  std::size_t frames = 0;
  std::vector<float> values;
  float floor_value = 0.0f;

  float& at(std::size_t mel, std::size_t frame) { return values[mel * frames + frame]; }
  float at(std::size_t mel, std::size_t frame) const { return values[mel * frames + frame]; }
};

/// Triangular mel filters over the one-sided DFT bins.
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;     // [n_mels, n_bins]
  std::vector<double> centers_hz;  // peak frequency of each filter
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank mel_filterbank(const DspConfig& cfg);

/// 1 + floor((num_samples - window) / hop); 0 when the clip is shorter than a window.
std::size_t frame_count(std::size_t num_samples, const DspConfig& cfg);

/// Hann window -> |DFT|^2 -> mel filterbank -> natural log of max(power, log_floor),
/// in double precision as [n_mels, frames].
std::vector<double> log_mel_energies(const AudioClip& clip, const DspConfig& cfg);

/// log_mel_energies stored as float.
LogMelSpectrogram logmel(const AudioClip& clip, const DspConfig& cfg);

/// Takes `length` contiguous frames starting at a uniformly random offset, or
/// right-pads with the floor value when the input is shorter.
LogMelSpectrogram crop_frames(const LogMelSpectrogram& spec, std::size_t length, Rng& rng);

/// Band-limited polyphase (Kaiser-windowed sinc) sample-rate conversion.
std::vector<float> resample(std::span<const float> samples, int from_rate, int to_rate);

/// Reads PCM (8/16/24/32-bit) or IEEE-float WAV, averaging channels to mono.
AudioClip read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono WAV.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// read_wav followed by resampling to target_rate.
AudioClip load_audio(const std::filesystem::path& path, int target_rate = 16000);

struct CachedFeatures {
  LogMelSpectrogram spec;
  std::size_t num_samples = 0;  // length of the resampled source clip
};

// Feature cache file: "DLFC", u32 version, f64 x6 extraction parameters
// (sample_rate, window_ms, hop_ms, fmin, fmax, log_floor), u32 n_mels,
// u64 num_samples, u32 frames, f32 floor, then float32 row-major values, all
// little-endian.
void save_feature_cache(const std::filesystem::path& path, const CachedFeatures& entry, const DspConfig& cfg);

/// Returns nullopt when the file was written under different extraction
/// parameters. Throws DataError for unreadable or corrupt files.
std::optional<CachedFeatures> load_feature_cache(const std::filesystem::path& path, const DspConfig& cfg);

}  // namespace delores
