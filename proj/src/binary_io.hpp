// Copyright 2026 The shape_tta Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SHAPE_TTA_SRC_BINARY_IO_HPP_
#define SHAPE_TTA_SRC_BINARY_IO_HPP_

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace shape_tta::detail {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), 8);
}

inline void write_f32_le(std::ostream& os, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b.data(), 4);
}

inline std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

// Layout shared by checkpoint and volume files:
//   8-byte magic | u64 LE header length | JSON header | payload
struct FramedHeader {
  std::string json;
  std::uint64_t payload_offset = 0;
  std::uint64_t file_size = 0;
};

inline void write_framed_header(std::ostream& os, std::string_view magic,
                                const std::string& json) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_u64_le(os, json.size());
  os.write(json.data(), static_cast<std::streamsize>(json.size()));
}

inline FramedHeader read_framed_header(std::ifstream& is, std::string_view magic,
                                       const std::filesystem::path& path) {
  is.seekg(0, std::ios::end);
  FramedHeader h;
  h.file_size = static_cast<std::uint64_t>(is.tellg());
  is.seekg(0, std::ios::beg);
  if (h.file_size < 16) {
    throw FormatError(path.string() + ": file too short for header");
  }
  std::array<unsigned char, 16> prefix;
  is.read(reinterpret_cast<char*>(prefix.data()), 16);
  if (std::memcmp(prefix.data(), magic.data(), 8) != 0) {
    throw FormatError(path.string() + ": bad magic, expected " + std::string(magic));
  }
  const std::uint64_t len = read_u64_le(prefix.data() + 8);
  if (len > h.file_size - 16) {
    throw FormatError(path.string() + ": header length " + std::to_string(len) +
                      " exceeds file size " + std::to_string(h.file_size));
  }
  h.json.resize(len);
  is.read(h.json.data(), static_cast<std::streamsize>(len));
  h.payload_offset = 16 + len;
  return h;
}

}  // namespace shape_tta::detail

#endif  // SHAPE_TTA_SRC_BINARY_IO_HPP_
