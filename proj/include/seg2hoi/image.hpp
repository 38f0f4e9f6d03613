#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seg2hoi {

/// 8-bit interleaved RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, fill) {}

  std::uint8_t* pixel(int x, int y) { return &rgb[(static_cast<size_t>(y) * width + x) * 3]; }
  const std::uint8_t* pixel(int x, int y) const {
    return &rgb[(static_cast<size_t>(y) * width + x) * 3];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Throws std::runtime_error when the bytes are not a decodable PNG.
Image decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const Image& image);
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& image);

}  // namespace seg2hoi
