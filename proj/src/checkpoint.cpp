// Copyright 2026 The SemStereo Desk Authors. All Rights Reserved.
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

#include "semstereo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include <fmt/format.h>

#include "semstereo/netpbm.hpp"

namespace semstereo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'M', 'S', 'T'};

template <typename V>
void Put(std::string& out, V value) {
  char buf[sizeof(V)];
  std::memcpy(buf, &value, sizeof(V));
  out.append(buf, sizeof(V));
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}
  size_t pos() const { return pos_; }

  template <typename V>
  V Get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(V)) {
      throw FormatError(fmt::format("checkpoint truncated reading {}", what),
                        pos_);
    }
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string_view Take(size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(fmt::format("checkpoint truncated reading {}", what),
                        pos_);
    }
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

template <typename V>
std::string Pack(std::span<const V> values) {
  std::string s(values.size() * sizeof(V), '\0');
  if (!values.empty()) std::memcpy(s.data(), values.data(), s.size());
  return s;
}

template <typename V>
std::vector<V> Unpack(const CheckpointEntry& e) {
  std::vector<V> out(e.payload.size() / sizeof(V));
  if (!out.empty()) std::memcpy(out.data(), e.payload.data(), e.payload.size());
  return out;
}

}  // namespace

size_t DTypeSize(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI64: return 8;
    case DType::kBytes: return 1;
  }
  throw std::invalid_argument("unknown dtype");
}

void Checkpoint::Add(CheckpointEntry entry) {
  if (Has(entry.name)) {
    throw std::invalid_argument(
        fmt::format("checkpoint entry '{}' added twice", entry.name));
  }
  if (entry.name.size() > 0xFFFF) {
    throw std::invalid_argument("checkpoint entry name too long");
  }
  const int64_t n = NumElements(entry.shape);
  if (static_cast<size_t>(n) * DTypeSize(entry.dtype) != entry.payload.size()) {
    throw std::invalid_argument(fmt::format(
        "checkpoint entry '{}': shape {} does not match {} payload bytes",
        entry.name, ShapeString(entry.shape), entry.payload.size()));
  }
  entries_.push_back(std::move(entry));
}

void Checkpoint::AddFloats(const std::string& name, const Shape& shape,
                           std::span<const float> values) {
  Add({name, DType::kF32, shape, Pack(values)});
}

void Checkpoint::AddDoubles(const std::string& name, const Shape& shape,
                            std::span<const double> values) {
  Add({name, DType::kF64, shape, Pack(values)});
}

void Checkpoint::AddInt(const std::string& name, int64_t value) {
  Add({name, DType::kI64, {}, Pack(std::span<const int64_t>(&value, 1))});
}

void Checkpoint::AddBytes(const std::string& name, std::string_view bytes) {
  Add({name, DType::kBytes, {static_cast<int64_t>(bytes.size())},
       std::string(bytes)});
}

bool Checkpoint::Has(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const CheckpointEntry& Checkpoint::Get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw std::out_of_range(fmt::format("checkpoint has no entry '{}'", name));
}

namespace {
const CheckpointEntry& Typed(const Checkpoint& c, const std::string& name,
                             DType dtype) {
  const CheckpointEntry& e = c.Get(name);
  if (e.dtype != dtype) {
    throw std::runtime_error(fmt::format(
        "checkpoint entry '{}' has dtype {}, expected {}", name,
        static_cast<int>(e.dtype), static_cast<int>(dtype)));
  }
  return e;
}
}  // namespace

std::vector<float> Checkpoint::Floats(const std::string& name) const {
  return Unpack<float>(Typed(*this, name, DType::kF32));
}

std::vector<double> Checkpoint::Doubles(const std::string& name) const {
  return Unpack<double>(Typed(*this, name, DType::kF64));
}

int64_t Checkpoint::Int(const std::string& name) const {
  return Unpack<int64_t>(Typed(*this, name, DType::kI64)).at(0);
}

std::string Checkpoint::Bytes(const std::string& name) const {
  return Typed(*this, name, DType::kBytes).payload;
}

std::string Checkpoint::Encode() const {
  std::string header(kMagic, 4);
  Put<uint32_t>(header, kCheckpointVersion);
  Put<uint32_t>(header, static_cast<uint32_t>(entries_.size()));
  size_t table_bytes = 0;
  for (const auto& e : entries_) {
    table_bytes += 2 + e.name.size() + 2 + 8 * e.shape.size() + 16;
  }
  uint64_t offset = header.size() + table_bytes;
  for (const auto& e : entries_) {
    Put<uint16_t>(header, static_cast<uint16_t>(e.name.size()));
    header += e.name;
    Put<uint8_t>(header, static_cast<uint8_t>(e.dtype));
    Put<uint8_t>(header, static_cast<uint8_t>(e.shape.size()));
    for (int64_t d : e.shape) Put<int64_t>(header, d);
    Put<uint64_t>(header, offset);
    Put<uint64_t>(header, e.payload.size());
    offset += e.payload.size();
  }
  for (const auto& e : entries_) header += e.payload;
  return header;
}

Checkpoint Checkpoint::Decode(std::string_view bytes) {
  Cursor c(bytes);
  if (c.Take(4, "magic") != std::string_view(kMagic, 4)) {
    throw FormatError("not a checkpoint (bad magic)", 0);
  }
  const size_t version_at = c.pos();
  const uint32_t version = c.Get<uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("unsupported checkpoint version {}", version),
                      version_at);
  }
  const uint32_t count = c.Get<uint32_t>("entry count");
  Checkpoint out;
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const uint16_t len = c.Get<uint16_t>("name length");
    e.name = std::string(c.Take(len, "name"));
    const size_t dtype_at = c.pos();
    const uint8_t dtype = c.Get<uint8_t>("dtype");
    if (dtype > static_cast<uint8_t>(DType::kBytes)) {
      throw FormatError(fmt::format("unknown dtype {}", dtype), dtype_at);
    }
    e.dtype = static_cast<DType>(dtype);
    const uint8_t rank = c.Get<uint8_t>("rank");
    for (int r = 0; r < rank; ++r) e.shape.push_back(c.Get<int64_t>("dim"));
    const size_t offset_at = c.pos();
    const uint64_t offset = c.Get<uint64_t>("payload offset");
    const uint64_t size = c.Get<uint64_t>("payload size");
    if (offset > bytes.size() || size > bytes.size() - offset) {
      throw FormatError(
          fmt::format("payload of '{}' runs past end of file", e.name),
          offset_at);
    }
    e.payload = std::string(bytes.substr(offset, size));
    try {
      out.Add(std::move(e));
    } catch (const std::invalid_argument& err) {
      throw FormatError(err.what(), offset_at);
    }
  }
  return out;
}

void Checkpoint::Save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  WriteFileBytes(path, Encode());
}

Checkpoint Checkpoint::Load(const std::filesystem::path& path) {
  try {
    return Decode(ReadFileBytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string(), e);
  }
}

}  // namespace semstereo
