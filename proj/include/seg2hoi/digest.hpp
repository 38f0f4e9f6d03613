#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace seg2hoi {

/// Incremental SHA-256, hex-encoded on finish().
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::span<const std::uint8_t> bytes);
  void update(const std::string& text);
  void update(std::span<const double> values);
  std::string finish();

 private:
  void* ctx_;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace seg2hoi
