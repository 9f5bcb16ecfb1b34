#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "flowlab/common.hpp"

// Little-endian binary IO helpers shared by the NBIO1/NBCK1/NBEM1/NBGR1 file
// formats. Encoding is explicit byte shifting so files are identical on any
// host.

namespace flowlab::io {

inline void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline void put_f32_array(std::ostream& os, const float* p, size_t n) {
  // fast path on little-endian hosts
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 4));
  } else {
    for (size_t i = 0; i < n; ++i) put_f32(os, p[i]);
  }
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline float get_f32(std::istream& is) {
  uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void get_f32_array(std::istream& is, float* p, size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 4));
  } else {
    for (size_t i = 0; i < n; ++i) p[i] = get_f32(is);
  }
}

inline void put_magic(std::ostream& os, const char magic[5]) { os.write(magic, 5); }

inline void expect_magic(std::istream& is, const char magic[5], const std::string& path) {
  char b[5] = {};
  is.read(b, 5);
  if (!is || std::memcmp(b, magic, 5) != 0)
    fail("BadMagic", path, ": expected ", std::string(magic, 5), " file");
}

inline std::ofstream open_write(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("FileOpen", "cannot write ", path);
  return os;
}

inline std::ifstream open_read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("FileOpen", "cannot read ", path);
  return is;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("FileOpen", "cannot read ", path);
  std::string s((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("FileOpen", "cannot write ", path);
  os << content;
}

}  // namespace flowlab::io
