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

#include "delores/dsp.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <numeric>

#include "delores/binary_io.hpp"
#include "delores/error.hpp"

namespace delores {

namespace {

constexpr double kMelLinearStep = 200.0 / 3.0;  // Hz per mel below 1 kHz
constexpr double kMelBreakHz = 1000.0;
constexpr double kMelBreak = kMelBreakHz / kMelLinearStep;  // 15
const double kMelLogStep = std::log(6.4) / 27.0;

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 50; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace

std::size_t DspConfig::window_length() const {
  return static_cast<std::size_t>(std::llround(sample_rate * window_ms / 1000.0));
}

std::size_t DspConfig::hop_length() const {
  return static_cast<std::size_t>(std::llround(sample_rate * hop_ms / 1000.0));
}

std::size_t DspConfig::fft_size() const { return std::bit_ceil(window_length()); }

float DspConfig::floor_value() const { return static_cast<float>(std::log(log_floor)); }

void DspConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("dsp.sample_rate must be positive");
  if (!(window_ms > hop_ms && hop_ms > 0)) throw ConfigError("dsp.window_ms must exceed dsp.hop_ms > 0");
  if (n_mels == 0) throw ConfigError("dsp.n_mels must be positive");
  if (!(fmin >= 0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw ConfigError("dsp: need 0 <= fmin < fmax <= sample_rate/2");
  }
  if (!(log_floor > 0)) throw ConfigError("dsp.log_floor must be positive");
  if (pretrain_frames == 0) throw ConfigError("dsp.pretrain_frames must be positive");
}

double hz_to_mel(double hz) {
  if (hz < kMelBreakHz) return hz / kMelLinearStep;
  return kMelBreak + std::log(hz / kMelBreakHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelBreak) return mel * kMelLinearStep;
  return kMelBreakHz * std::exp((mel - kMelBreak) * kMelLogStep);
}

MelFilterbank mel_filterbank(const DspConfig& cfg) {
  cfg.validate();
  MelFilterbank fb;
  fb.n_mels = cfg.n_mels;
  const std::size_t n_fft = cfg.fft_size();
  fb.n_bins = n_fft / 2 + 1;
  fb.weights.assign(fb.n_mels * fb.n_bins, 0.0);

  const double lo = hz_to_mel(cfg.fmin), hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    fb.centers_hz.push_back(center);
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(n_fft);
      const double w = std::min((f - left) / (center - left), (right - f) / (right - center));
      fb.weights[m * fb.n_bins + k] = std::max(0.0, w);
    }
  }
  return fb;
}

std::size_t frame_count(std::size_t num_samples, const DspConfig& cfg) {
  const std::size_t win = cfg.window_length();
  if (num_samples < win) return 0;
  return 1 + (num_samples - win) / cfg.hop_length();
}

std::vector<double> log_mel_energies(const AudioClip& clip, const DspConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate) {
    throw ConfigError("logmel: clip rate " + std::to_string(clip.sample_rate) + " Hz differs from configured " +
                      std::to_string(cfg.sample_rate) + " Hz");
  }
  const std::size_t frames = frame_count(clip.samples.size(), cfg);
  if (frames == 0) {
    throw DataError("logmel: clip of " + std::to_string(clip.samples.size()) +
                    " samples is shorter than one analysis window");
  }
  const std::size_t win = cfg.window_length(), hop = cfg.hop_length(), n_fft = cfg.fft_size();
  const MelFilterbank fb = mel_filterbank(cfg);

  std::vector<double> hann(win);
  for (std::size_t n = 0; n < win; ++n) {
    hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(win));
  }

  std::vector<double> out(fb.n_mels * frames);
  std::vector<std::complex<double>> buf(n_fft);
  std::vector<double> power(fb.n_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    const float* frame = clip.samples.data() + t * hop;
    for (std::size_t n = 0; n < win; ++n) buf[n] = frame[n] * hann[n];
    fft(buf);
    for (std::size_t k = 0; k < fb.n_bins; ++k) power[k] = std::norm(buf[k]);
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      const double* w = fb.weights.data() + m * fb.n_bins;
      double e = 0.0;
      for (std::size_t k = 0; k < fb.n_bins; ++k) e += w[k] * power[k];
      out[m * frames + t] = std::log(std::max(e, cfg.log_floor));
    }
  }
  return out;
}

LogMelSpectrogram logmel(const AudioClip& clip, const DspConfig& cfg) {
  const std::vector<double> energies = log_mel_energies(clip, cfg);
  LogMelSpectrogram out;
  out.n_mels = cfg.n_mels;
  out.frames = energies.size() / cfg.n_mels;
  out.floor_value = cfg.floor_value();
  out.values.assign(energies.begin(), energies.end());
  return out;
}

LogMelSpectrogram crop_frames(const LogMelSpectrogram& spec, std::size_t length, Rng& rng) {
  if (length == 0) throw ConfigError("crop_frames: target length must be positive");
  LogMelSpectrogram out;
  out.n_mels = spec.n_mels;
  out.frames = length;
  out.floor_value = spec.floor_value;
  out.values.assign(spec.n_mels * length, spec.floor_value);
  std::size_t start = 0;
  if (spec.frames > length) start = static_cast<std::size_t>(rng.below(spec.frames - length + 1));
  const std::size_t copy = std::min(length, spec.frames);
  for (std::size_t m = 0; m < spec.n_mels; ++m) {
    std::copy_n(spec.values.begin() + static_cast<std::ptrdiff_t>(m * spec.frames + start), copy,
                out.values.begin() + static_cast<std::ptrdiff_t>(m * length));
  }
  return out;
}

std::vector<float> resample(std::span<const float> samples, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ConfigError("resample: rates must be positive");
  if (from_rate == to_rate) return {samples.begin(), samples.end()};
  const long g = std::gcd(from_rate, to_rate);
  const long up = to_rate / g, down = from_rate / g;

  // Lowpass at the lower Nyquist frequency, expressed in input-sample units.
  const double cutoff = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  constexpr int kZeroCrossings = 16;
  constexpr double kBeta = 8.6;
  const long half = static_cast<long>(std::ceil(kZeroCrossings / cutoff));
  const double i0_beta = bessel_i0(kBeta);

  // One tap table per output phase: phase p has fractional offset p/up.
  std::vector<std::vector<double>> taps(static_cast<std::size_t>(up));
  for (long p = 0; p < up; ++p) {
    auto& row = taps[static_cast<std::size_t>(p)];
    row.resize(static_cast<std::size_t>(2 * half + 1));
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    for (long j = -half; j <= half; ++j) {
      const double tau = frac - static_cast<double>(j);  // distance from input sample base + j
      const double x = cutoff * tau;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double r = tau / static_cast<double>(half + 1);
      const double window = std::abs(r) >= 1.0 ? 0.0 : bessel_i0(kBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      row[static_cast<std::size_t>(j + half)] = cutoff * sinc * window;
    }
  }

  const long n_in = static_cast<long>(samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  std::vector<float> out(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long pos = n * down;
    const long base = pos / up;
    const auto& row = taps[static_cast<std::size_t>(pos % up)];
    double acc = 0.0;
    for (long j = -half; j <= half; ++j) {
      const long k = base + j;
      if (k < 0 || k >= n_in) continue;
      acc += samples[static_cast<std::size_t>(k)] * row[static_cast<std::size_t>(j + half)];
    }
    out[static_cast<std::size_t>(n)] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
  }
  return out;
}

AudioClip load_audio(const std::filesystem::path& path, int target_rate) {
  AudioClip clip = read_wav(path);
  if (clip.sample_rate != target_rate) {
    clip.samples = resample(clip.samples, clip.sample_rate, target_rate);
    clip.sample_rate = target_rate;
  }
  if (clip.samples.empty()) throw DataError("empty audio after resampling: " + path.string());
  return clip;
}

namespace {

constexpr std::uint32_t kCacheVersion = 2;

std::array<double, 6> cache_params(const DspConfig& cfg) {
  return {static_cast<double>(cfg.sample_rate), cfg.window_ms, cfg.hop_ms, cfg.fmin, cfg.fmax, cfg.log_floor};
}

}  // namespace

void save_feature_cache(const std::filesystem::path& path, const CachedFeatures& entry, const DspConfig& cfg) {
  const LogMelSpectrogram& spec = entry.spec;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write feature cache " + path.string());
  io::write_bytes(os, "DLFC", 4);
  io::write_pod<std::uint32_t>(os, kCacheVersion);
  for (double v : cache_params(cfg)) io::write_pod<double>(os, v);
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(spec.n_mels));
  io::write_pod<std::uint64_t>(os, entry.num_samples);
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(spec.frames));
  io::write_pod<float>(os, spec.floor_value);
  io::write_bytes(os, spec.values.data(), spec.values.size() * sizeof(float));
  if (!os) throw DataError("failed writing feature cache " + path.string());
}

std::optional<CachedFeatures> load_feature_cache(const std::filesystem::path& path, const DspConfig& cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open feature cache " + path.string());
  char magic[4];
  io::read_bytes(is, magic, 4, "feature cache magic");
  if (std::string(magic, 4) != "DLFC") throw DataError("not a feature cache file: " + path.string());
  const auto version = io::read_pod<std::uint32_t>(is, "feature cache version");
  if (version != kCacheVersion) return std::nullopt;
  for (double want : cache_params(cfg)) {
    if (io::read_pod<double>(is, "feature cache parameters") != want) return std::nullopt;
  }
  if (io::read_pod<std::uint32_t>(is, "feature cache n_mels") != cfg.n_mels) return std::nullopt;
  CachedFeatures entry;
  entry.num_samples = io::read_pod<std::uint64_t>(is, "feature cache sample count");
  LogMelSpectrogram& spec = entry.spec;
  spec.n_mels = cfg.n_mels;
  spec.frames = io::read_pod<std::uint32_t>(is, "feature cache frames");
  if (spec.frames != frame_count(entry.num_samples, cfg)) throw DataError("corrupt feature cache " + path.string());
  spec.floor_value = io::read_pod<float>(is, "feature cache floor");
  spec.values.resize(spec.n_mels * spec.frames);
  io::read_bytes(is, spec.values.data(), spec.values.size() * sizeof(float), "feature cache values");
  return entry;
}

}  // namespace delores
