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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "delores/binary_io.hpp"
#include "delores/dsp.hpp"
#include "delores/error.hpp"

namespace delores {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16_at(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t u32_at(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double decode_sample(const std::uint8_t* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFormatFloat) {
    if (bits == 32) {
      float f;
      std::memcpy(&f, p, 4);
      return f;
    }
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(u16_at(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(u32_at(p)) / 2147483648.0;
  }
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open audio file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) { throw DataError("unsupported WAV " + path.string() + ": " + why); };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail("missing RIFF/WAVE header");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t len = u32_at(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) fail("short fmt chunk");
      format = u16_at(chunk + 8);
      channels = u16_at(chunk + 10);
      rate = u32_at(chunk + 12);
      bits = u16_at(chunk + 22);
      if (format == kFormatExtensible) {
        if (avail < 26) fail("short extensible fmt chunk");
        format = u16_at(chunk + 8 + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (channels == 0 || rate == 0) fail("missing fmt chunk");
  if (data == nullptr) fail("missing data chunk");
  const bool pcm_ok = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!pcm_ok && !float_ok) fail("format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_len / frame_bytes;
  if (frames == 0) throw DataError("empty audio in " + path.string());

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += decode_sample(data + i * frame_bytes + c * bytes_per_sample, format, bits);
    clip.samples[i] = static_cast<float>(std::clamp(acc / channels, -1.0, 1.0));
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write audio file " + path.string());
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 2;
  io::write_bytes(os, "RIFF", 4);
  io::write_pod<std::uint32_t>(os, 36 + data_bytes);
  io::write_bytes(os, "WAVEfmt ", 8);
  io::write_pod<std::uint32_t>(os, 16);
  io::write_pod<std::uint16_t>(os, kFormatPcm);
  io::write_pod<std::uint16_t>(os, 1);
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate));
  io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  io::write_pod<std::uint16_t>(os, 2);
  io::write_pod<std::uint16_t>(os, 16);
  io::write_bytes(os, "data", 4);
  io::write_pod<std::uint32_t>(os, data_bytes);
  std::vector<std::int16_t> pcm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::clamp(static_cast<double>(clip.samples[i]), -1.0, 1.0);
    pcm[i] = static_cast<std::int16_t>(std::lround(std::clamp(v * 32768.0, -32768.0, 32767.0)));
  }
  io::write_bytes(os, pcm.data(), pcm.size() * sizeof(std::int16_t));
  if (!os) throw DataError("failed writing audio file " + path.string());
}

}  // namespace delores
