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

#include "delores/checkpoint.hpp"

#include <fstream>

#include "delores/binary_io.hpp"
#include "delores/error.hpp"

namespace delores {

namespace fs = std::filesystem;

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32:
      return 4;
    case DType::kF64:
      return 8;
    case DType::kU8:
      return 1;
  }
  throw DataError("unknown dtype");
}

NamedArray NamedArray::of_bytes(std::string name, const std::string& bytes) {
  NamedArray a;
  a.name = std::move(name);
  a.dtype = DType::kU8;
  a.dims = {bytes.size()};
  a.payload.assign(bytes.begin(), bytes.end());
  return a;
}

std::string NamedArray::as_bytes() const {
  if (dtype != DType::kU8) throw DataError("array " + name + " is not a byte array");
  return {payload.begin(), payload.end()};
}

const NamedArray* Archive::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

const NamedArray& Archive::get(const std::string& name) const {
  if (const NamedArray* a = find(name)) return *a;
  throw DataError("archive has no array named '" + name + "'");
}

void write_archive(const fs::path& path, const Archive& archive) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + tmp.string());
    io::write_bytes(os, "DLRS", 4);
    io::write_pod<std::uint32_t>(os, Archive::kVersion);
    io::write_string(os, archive.header.dump());
    io::write_pod<std::uint64_t>(os, archive.arrays.size());
    for (const auto& a : archive.arrays) {
      io::write_string(os, a.name);
      io::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(a.dtype));
      io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(a.dims.size()));
      for (auto d : a.dims) io::write_pod<std::uint64_t>(os, d);
      io::write_bytes(os, a.payload.data(), a.payload.size());
    }
    os.flush();
    if (!os) throw DataError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Archive read_archive(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  is.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0);
  char magic[4];
  io::read_bytes(is, magic, 4, "magic");
  if (std::string(magic, 4) != "DLRS") throw DataError(path.string() + " is not a delores archive (bad magic)");
  const auto version = io::read_pod<std::uint32_t>(is, "version");
  if (version != Archive::kVersion) {
    throw DataError(path.string() + ": archive version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(Archive::kVersion) + ")");
  }
  Archive ar;
  try {
    ar.header = nlohmann::json::parse(io::read_string(is, "header", file_size));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": corrupt archive header: " + e.what());
  }
  const auto count = io::read_pod<std::uint64_t>(is, "array count");
  if (count > file_size) throw DataError(path.string() + ": implausible array count");
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = io::read_string(is, "array name", 4096);
    const auto dt = io::read_pod<std::uint8_t>(is, "dtype");
    if (dt > 2) throw DataError(path.string() + ": array " + a.name + " has unknown dtype");
    a.dtype = static_cast<DType>(dt);
    const auto rank = io::read_pod<std::uint32_t>(is, "rank");
    if (rank > 16) throw DataError(path.string() + ": array " + a.name + " has implausible rank");
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.dims.push_back(io::read_pod<std::uint64_t>(is, "dims"));
      n *= a.dims.back();
    }
    const std::uint64_t bytes = n * dtype_size(a.dtype);
    if (bytes > file_size) throw DataError(path.string() + ": array " + a.name + " exceeds file size (truncated?)");
    a.payload.resize(bytes);
    io::read_bytes(is, a.payload.data(), bytes, "payload of " + a.name);
    ar.arrays.push_back(std::move(a));
  }
  return ar;
}

}  // namespace delores
