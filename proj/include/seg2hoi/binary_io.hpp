#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace seg2hoi::io {

// Little-endian primitive framing for the cache and checkpoint containers.
// The build targets little-endian hosts, so values are copied byte-for-byte.

inline void write_bytes(std::ostream& out, const void* data, size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("write failed");
}

template <typename T>
void write_pod(std::ostream& out, T value) {
  write_bytes(out, &value, sizeof(T));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline void read_bytes(std::istream& in, void* data, size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) throw std::runtime_error("unexpected end of file");
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  read_bytes(in, &value, sizeof(T));
  return value;
}

inline std::string read_string(std::istream& in, std::uint32_t limit = 1u << 26) {
  const auto n = read_pod<std::uint32_t>(in);
  if (n > limit) throw std::runtime_error("string length out of range");
  std::string s(n, '\0');
  read_bytes(in, s.data(), n);
  return s;
}

}  // namespace seg2hoi::io
