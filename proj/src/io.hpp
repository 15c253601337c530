#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace fedlab {

// Little-endian packing helpers: file formats are byte-defined, so writes go
// through explicit byte packing instead of relying on host endianness.

inline void put_u16_le(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}

inline void put_u32_le(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::vector<uint8_t>& out, double d) {
  uint64_t v = 0;
  std::memcpy(&v, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

inline uint16_t get_u16_le(const uint8_t* p) { return uint16_t(p[0] | (uint16_t(p[1]) << 8)); }

inline uint32_t get_u32_le(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
  return v;
}

inline double get_f64_le(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  double d = 0;
  std::memcpy(&d, &v, 8);
  return d;
}

inline uint64_t fnv1a64(const uint8_t* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::vector<uint8_t>& data) { return fnv1a64(data.data(), data.size()); }

std::string hex64(uint64_t v);

// Whole-file helpers. write_file_atomic stages into a sibling temp file and
// renames, so readers never observe a partial file.
std::vector<uint8_t> read_file(const std::string& path);
void write_file_atomic(const std::string& path, const void* data, size_t n);
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace fedlab
