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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "delores/tensor.hpp"

namespace delores {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

std::size_t dtype_size(DType t);

/// A named, typed, shaped blob of little-endian values.
struct NamedArray {
  std::string name;
  DType dtype = DType::kF32;
  Shape dims;
  std::vector<std::uint8_t> payload;

  template <typename T>
  static NamedArray of(std::string name, Shape dims, std::span<const T> values);
  static NamedArray of_bytes(std::string name, const std::string& bytes);

  /// Values converted to T; the stored dtype must match T exactly.
  template <typename T>
  std::vector<T> as() const;
  std::string as_bytes() const;
};

/// File layout ("array archive"), all little-endian:
///   "DLRS" | u32 version | u64 len + JSON header text | u64 array count |
///   per array: u64 len + name | u8 dtype | u32 rank | u64 dims[rank] | payload
struct Archive {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json header;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  const NamedArray& get(const std::string& name) const;  // throws DataError if absent
};

/// Writes to a temporary sibling file and renames it into place.
void write_archive(const std::filesystem::path& path, const Archive& archive);

/// Validates magic, version, and sizes; throws DataError without partial results.
Archive read_archive(const std::filesystem::path& path);

template <typename T>
NamedArray NamedArray::of(std::string name, Shape dims, std::span<const T> values) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  NamedArray a;
  a.name = std::move(name);
  a.dtype = std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
  if (numel_of(dims) != values.size()) throw ShapeError("array " + a.name + ": dims do not match value count");
  a.dims = std::move(dims);
  a.payload.resize(values.size() * sizeof(T));
  std::memcpy(a.payload.data(), values.data(), a.payload.size());
  return a;
}

template <typename T>
std::vector<T> NamedArray::as() const {
  const DType want = std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
  if (dtype != want) throw DataError("array " + name + " has a different dtype than requested");
  std::vector<T> out(payload.size() / sizeof(T));
  std::memcpy(out.data(), payload.data(), payload.size());
  return out;
}

}  // namespace delores
