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

#include "semstereo/netpbm.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace semstereo {

FormatError::FormatError(const std::string& what, size_t offset)
    : std::runtime_error(fmt::format("{} (at byte {})", what, offset)),
      offset_(offset),
      detail_(what) {}

FormatError::FormatError(const std::string& path, const FormatError& inner)
    : std::runtime_error(fmt::format("{}: {} (at byte {})", path,
                                     inner.detail(), inner.offset())),
      offset_(inner.offset()),
      detail_(inner.detail()) {}

namespace {

// Header tokenizer shared by the three formats. Comments run from '#' to
// the end of the line.
class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  size_t pos() const { return pos_; }

  std::string_view Magic() {
    if (bytes_.size() < 2) throw FormatError("truncated magic number", 0);
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  void SkipSpaceAndComments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string Token(const char* what) {
    SkipSpaceAndComments();
    const size_t start = pos_;
    while (pos_ < bytes_.size() &&
           !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      ++pos_;
    }
    if (pos_ == start) {
      throw FormatError(fmt::format("missing {}", what), start);
    }
    return std::string(bytes_.substr(start, pos_ - start));
  }

  int PositiveInt(const char* what) {
    const size_t start = (SkipSpaceAndComments(), pos_);
    const std::string tok = Token(what);
    int value = 0;
    for (char c : tok) {
      if (!std::isdigit(static_cast<unsigned char>(c)) || value > 1 << 24) {
        throw FormatError(fmt::format("bad {} '{}'", what, tok), start);
      }
      value = value * 10 + (c - '0');
    }
    if (value <= 0) {
      throw FormatError(fmt::format("{} must be positive", what), start);
    }
    return value;
  }

  // Exactly one whitespace byte separates the header from the raster.
  void EndOfHeader() {
    if (pos_ >= bytes_.size() ||
        !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("missing whitespace after header", pos_);
    }
    ++pos_;
  }

  std::string_view Payload(size_t expected) const {
    const size_t have = bytes_.size() - pos_;
    if (have < expected) {
      throw FormatError(fmt::format("truncated payload: expected {} bytes, "
                                    "found {}",
                                    expected, have),
                        bytes_.size());
    }
    return bytes_.substr(pos_, expected);
  }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

template <typename Image>
void CheckSize(const Image& image, size_t channels) {
  if (image.width <= 0 || image.height <= 0 ||
      image.data.size() !=
          static_cast<size_t>(image.width) * image.height * channels) {
    throw std::invalid_argument(fmt::format(
        "image {}x{}x{} does not match {} samples", image.width, image.height,
        channels, image.data.size()));
  }
}

template <typename Image>
Image DecodeBytemap(std::string_view bytes, std::string_view magic,
                    size_t channels) {
  HeaderReader r(bytes);
  if (r.Magic() != magic) {
    throw FormatError(fmt::format("expected magic '{}'", magic), 0);
  }
  Image image;
  image.width = r.PositiveInt("width");
  image.height = r.PositiveInt("height");
  const size_t maxval_at = (r.SkipSpaceAndComments(), r.pos());
  const int maxval = r.PositiveInt("maxval");
  if (maxval > 255) {
    throw FormatError(
        fmt::format("unsupported maxval {} (only 8-bit rasters)", maxval),
        maxval_at);
  }
  r.EndOfHeader();
  const size_t n = static_cast<size_t>(image.width) * image.height * channels;
  const std::string_view payload = r.Payload(n);
  image.data.assign(payload.begin(), payload.end());
  if (maxval != 255) {
    for (size_t i = 0; i < n; ++i) {
      if (image.data[i] > maxval) {
        throw FormatError(
            fmt::format("sample {} exceeds maxval {}", image.data[i], maxval),
            r.pos() + i);
      }
    }
  }
  return image;
}

}  // namespace

std::string EncodePpm(const RgbImage& image) {
  CheckSize(image, 3);
  std::string out = fmt::format("P6\n{} {}\n255\n", image.width, image.height);
  out.append(image.data.begin(), image.data.end());
  return out;
}

std::string EncodePgm(const GrayImage& image) {
  CheckSize(image, 1);
  std::string out = fmt::format("P5\n{} {}\n255\n", image.width, image.height);
  out.append(image.data.begin(), image.data.end());
  return out;
}

std::string EncodePfm(const FloatImage& image) {
  CheckSize(image, 1);
  static_assert(std::endian::native == std::endian::little,
                "PFM writer assumes a little-endian host");
  std::string out = fmt::format("Pf\n{} {}\n-1.0\n", image.width, image.height);
  const size_t row_bytes = static_cast<size_t>(image.width) * sizeof(float);
  for (int y = image.height - 1; y >= 0; --y) {
    out.append(reinterpret_cast<const char*>(image.data.data() +
                                             static_cast<size_t>(y) * image.width),
               row_bytes);
  }
  return out;
}

RgbImage DecodePpm(std::string_view bytes) {
  return DecodeBytemap<RgbImage>(bytes, "P6", 3);
}

GrayImage DecodePgm(std::string_view bytes) {
  return DecodeBytemap<GrayImage>(bytes, "P5", 1);
}

FloatImage DecodePfm(std::string_view bytes) {
  HeaderReader r(bytes);
  const std::string_view magic = r.Magic();
  if (magic == "PF") {
    throw FormatError("colour PFM not supported; expected 'Pf'", 0);
  }
  if (magic != "Pf") throw FormatError("expected magic 'Pf'", 0);
  FloatImage image;
  image.width = r.PositiveInt("width");
  image.height = r.PositiveInt("height");
  r.SkipSpaceAndComments();
  const size_t scale_at = r.pos();
  const std::string tok = r.Token("scale");
  double scale = 0.0;
  try {
    size_t used = 0;
    scale = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
  } catch (const std::exception&) {
    throw FormatError(fmt::format("bad scale '{}'", tok), scale_at);
  }
  if (scale == 0.0) throw FormatError("scale must be non-zero", scale_at);
  r.EndOfHeader();
  const bool little = scale < 0.0;
  const size_t count = static_cast<size_t>(image.width) * image.height;
  const std::string_view payload = r.Payload(count * sizeof(float));
  image.data.resize(count);
  for (int row = 0; row < image.height; ++row) {
    // Stored bottom-up.
    const int y = image.height - 1 - row;
    for (int x = 0; x < image.width; ++x) {
      const size_t src = (static_cast<size_t>(row) * image.width + x) * 4;
      uint32_t bits = 0;
      std::memcpy(&bits, payload.data() + src, 4);
      if (little != (std::endian::native == std::endian::little)) {
        bits = __builtin_bswap32(bits);
      }
      image.data[static_cast<size_t>(y) * image.width + x] =
          std::bit_cast<float>(bits);
    }
  }
  return image;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error(fmt::format("write failed for {}", path.string()));
  }
}

namespace {
template <typename Fn>
auto WithPath(const std::filesystem::path& path, Fn&& fn) {
  try {
    return fn(ReadFileBytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string(), e);
  }
}
}  // namespace

RgbImage ReadPpm(const std::filesystem::path& path) {
  return WithPath(path, [](const std::string& b) { return DecodePpm(b); });
}

GrayImage ReadPgm(const std::filesystem::path& path) {
  return WithPath(path, [](const std::string& b) { return DecodePgm(b); });
}

FloatImage ReadPfm(const std::filesystem::path& path) {
  return WithPath(path, [](const std::string& b) { return DecodePfm(b); });
}

void WritePpm(const std::filesystem::path& path, const RgbImage& image) {
  WriteFileBytes(path, EncodePpm(image));
}

void WritePgm(const std::filesystem::path& path, const GrayImage& image) {
  WriteFileBytes(path, EncodePgm(image));
}

void WritePfm(const std::filesystem::path& path, const FloatImage& image) {
  WriteFileBytes(path, EncodePfm(image));
}

}  // namespace semstereo
