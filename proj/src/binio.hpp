#ifndef SIAMPROG_SRC_BINIO_HPP_
#define SIAMPROG_SRC_BINIO_HPP_

// Little-endian primitives for the volume and checkpoint containers.
// Byte-composed rather than memcpy'd so the on-disk format does not depend
// on host endianness.

#include <cstdint>
#include <cstring>
#include <ostream>
#include <istream>

#include "siamprog/common.hpp"

namespace siamprog::binio {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("unexpected end of file while reading u32");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline void put_u64(std::ostream& os, uint64_t v) {
  put_u32(os, static_cast<uint32_t>(v));
  put_u32(os, static_cast<uint32_t>(v >> 32));
}

inline uint64_t get_u64(std::istream& is) {
  const uint64_t lo = get_u32(is);
  const uint64_t hi = get_u32(is);
  return lo | hi << 32;
}

inline void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(os, bits);
}

inline double get_f64(std::istream& is) {
  const uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
  const uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace siamprog::binio

#endif  // SIAMPROG_SRC_BINIO_HPP_
