#include "seg2hoi/image.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace seg2hoi {

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) == 0) {
    throw std::runtime_error("undecodable PNG");
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr) == 0) {
    png_image_free(&img);
    throw std::runtime_error(std::string("undecodable PNG: ") + img.message);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0, nullptr) == 0) {
    throw std::runtime_error("PNG size query failed");
  }
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&img, out.data(), &size, 0, image.rgb.data(), 0, nullptr) == 0) {
    throw std::runtime_error("PNG encode failed");
  }
  out.resize(size);
  return out;
}

Image read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void write_png(const std::string& path, const Image& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace seg2hoi
