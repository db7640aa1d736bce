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

// Tagged little-endian container for parameters and training state.
//
//   "SMST"              4-byte magic
//   u32 version         currently 1
//   u32 entry_count
//   entry table, per entry:
//     u16 name_length, name bytes
//     u8 dtype, u8 rank, i64 dims[rank]
//     u64 payload_offset (from start of file), u64 payload_bytes
//   payloads, in table order

#ifndef SEMSTEREO_CHECKPOINT_HPP_
#define SEMSTEREO_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "semstereo/tensor.hpp"

namespace semstereo {

inline constexpr uint32_t kCheckpointVersion = 1;

enum class DType : uint8_t { kF32 = 0, kF64 = 1, kI64 = 2, kBytes = 3 };

size_t DTypeSize(DType dtype);

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::kBytes;
  Shape shape;
  std::string payload;  // raw little-endian bytes
};

class Checkpoint {
 public:
  void AddFloats(const std::string& name, const Shape& shape,
                 std::span<const float> values);
  void AddDoubles(const std::string& name, const Shape& shape,
                  std::span<const double> values);
  void AddInt(const std::string& name, int64_t value);
  void AddBytes(const std::string& name, std::string_view bytes);

  bool Has(const std::string& name) const;
  const CheckpointEntry& Get(const std::string& name) const;
  std::vector<float> Floats(const std::string& name) const;
  std::vector<double> Doubles(const std::string& name) const;
  int64_t Int(const std::string& name) const;
  std::string Bytes(const std::string& name) const;

  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  std::string Encode() const;
  static Checkpoint Decode(std::string_view bytes);
  void Save(const std::filesystem::path& path) const;
  static Checkpoint Load(const std::filesystem::path& path);

 private:
  void Add(CheckpointEntry entry);
  std::vector<CheckpointEntry> entries_;
};

}  // namespace semstereo

#endif  // SEMSTEREO_CHECKPOINT_HPP_
