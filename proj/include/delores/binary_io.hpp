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

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "delores/error.hpp"

// Little-endian primitives shared by the binary file formats.

namespace delores::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated file while reading " + what);
  return v;
}

inline void write_bytes(std::ostream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* data, std::size_t n, const std::string& what) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!is) throw DataError("truncated file while reading " + what);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint64_t>(os, s.size());
  write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is, const std::string& what, std::uint64_t max_len = 1ULL << 32) {
  const auto n = read_pod<std::uint64_t>(is, what);
  if (n > max_len) throw DataError("implausible length while reading " + what);
  std::string s(n, '\0');
  read_bytes(is, s.data(), n, what);
  return s;
}

}  // namespace delores::io
