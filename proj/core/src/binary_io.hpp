#ifndef REGIONQA_SRC_BINARY_IO_HPP_
#define REGIONQA_SRC_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace regionqa::detail {

// Little-endian encoders independent of host byte order.

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

inline void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Returns false on short read.
template <typename U>
bool get_le(std::istream& in, U& value) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return true;
}

inline bool get_u32(std::istream& in, std::uint32_t& v) { return get_le(in, v); }
inline bool get_f32(std::istream& in, float& v) {
  std::uint32_t bits;
  if (!get_le(in, bits)) return false;
  v = std::bit_cast<float>(bits);
  return true;
}
inline bool get_f64(std::istream& in, double& v) {
  std::uint64_t bits;
  if (!get_le(in, bits)) return false;
  v = std::bit_cast<double>(bits);
  return true;
}
inline bool get_string(std::istream& in, std::string& s, std::uint32_t max_len = 1u << 24) {
  std::uint32_t n;
  if (!get_u32(in, n) || n > max_len) return false;
  s.resize(n);
  return static_cast<bool>(in.read(s.data(), n));
}

}  // namespace regionqa::detail

#endif  // REGIONQA_SRC_BINARY_IO_HPP_
