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

// Binary PPM (P6), PGM (P5) and single-channel PFM ("Pf") readers/writers.

#ifndef SEMSTEREO_NETPBM_HPP_
#define SEMSTEREO_NETPBM_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace semstereo {

// Raised for malformed files; the message names the byte offset.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, size_t offset);
  // Same error, prefixed with the file it came from.
  FormatError(const std::string& path, const FormatError& inner);
  size_t offset() const { return offset_; }
  const std::string& detail() const { return detail_; }

 private:
  size_t offset_;
  std::string detail_;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // interleaved RGB, row-major, top row first
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;
};

struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major, top row first
};

std::string EncodePpm(const RgbImage& image);
std::string EncodePgm(const GrayImage& image);
// Little-endian ("-1.0" scale) with rows stored bottom-up.
std::string EncodePfm(const FloatImage& image);

RgbImage DecodePpm(std::string_view bytes);
GrayImage DecodePgm(std::string_view bytes);
// Accepts either byte order; colour "PF" files are rejected.
FloatImage DecodePfm(std::string_view bytes);

std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

RgbImage ReadPpm(const std::filesystem::path& path);
GrayImage ReadPgm(const std::filesystem::path& path);
FloatImage ReadPfm(const std::filesystem::path& path);
void WritePpm(const std::filesystem::path& path, const RgbImage& image);
void WritePgm(const std::filesystem::path& path, const GrayImage& image);
void WritePfm(const std::filesystem::path& path, const FloatImage& image);

}  // namespace semstereo

#endif  // SEMSTEREO_NETPBM_HPP_
