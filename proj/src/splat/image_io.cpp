// SPDX-License-Identifier: Apache-2.0
#include <cstring>

#include <fmt/format.h>
#include <png.h>

#include "vil/error.hpp"
#include "vil/splat.hpp"

namespace vil::splat {

void write_png(const Frame& frame, const std::filesystem::path& path) {
  if (frame.rgb.size() != static_cast<std::size_t>(frame.width) * frame.height * 3) {
    throw InvalidArgument("write_png: buffer size does not match frame dimensions");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(frame.width);
  img.height = static_cast<png_uint_32>(frame.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, frame.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError(fmt::format("write_png '{}': {}", path.string(), msg));
  }
}

Frame read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError(fmt::format("read_png '{}': {}", path.string(), img.message));
  }
  img.format = PNG_FORMAT_RGB;
  Frame f;
  f.width = static_cast<int>(img.width);
  f.height = static_cast<int>(img.height);
  f.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, f.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError(fmt::format("read_png '{}': {}", path.string(), msg));
  }
  return f;
}

std::vector<std::uint8_t> encode_png(const Frame& frame) {
  if (frame.rgb.size() != static_cast<std::size_t>(frame.width) * frame.height * 3) {
    throw InvalidArgument("encode_png: buffer size does not match frame dimensions");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(frame.width);
  img.height = static_cast<png_uint_32>(frame.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, frame.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError(fmt::format("encode_png: {}", msg));
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, frame.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError(fmt::format("encode_png: {}", msg));
  }
  out.resize(size);
  return out;
}

Frame decode_png(std::span<const std::uint8_t> data) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, data.data(), data.size())) {
    throw IoError(fmt::format("decode_png: {}", img.message));
  }
  img.format = PNG_FORMAT_RGB;
  Frame f;
  f.width = static_cast<int>(img.width);
  f.height = static_cast<int>(img.height);
  f.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, f.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError(fmt::format("decode_png: {}", msg));
  }
  return f;
}

}  // namespace vil::splat
