#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "aseg/tensor.hpp"

namespace aseg {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::uint8_t> read_png(const std::string& path, std::uint32_t format,
                                          int& height, int& width) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageIoError("cannot read PNG '" + path + "': " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageIoError("cannot decode PNG '" + path + "': " + image.message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return buffer;
}

inline void write_png(const std::string& path, std::uint32_t format, int height, int width,
                      const std::vector<std::uint8_t>& interleaved) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.format = format;
  image.height = static_cast<png_uint_32>(height);
  image.width = static_cast<png_uint_32>(width);
  if (!png_image_write_to_file(&image, path.c_str(), 0, interleaved.data(), 0, nullptr)) {
    throw ImageIoError("cannot write PNG '" + path + "': " + image.message);
  }
}

}  // namespace detail

/// RGB image scaled to [0, 1], channel-major.
inline Tensor<float> read_png_rgb(const std::string& path) {
  int h = 0, w = 0;
  const auto buf = detail::read_png(path, PNG_FORMAT_RGB, h, w);
  Tensor<float> out(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out(c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return out;
}

/// Single-channel 8-bit image as integers.
inline LabelMap read_png_gray(const std::string& path) {
  int h = 0, w = 0;
  const auto buf = detail::read_png(path, PNG_FORMAT_GRAY, h, w);
  LabelMap out(1, h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i];
  return out;
}

/// Writes a (3, H, W) byte tensor.
inline void write_png_rgb(const std::string& path, const Tensor<std::uint8_t>& rgb) {
  if (rgb.channels() != 3) throw ShapeError("write_png_rgb needs 3 channels");
  std::vector<std::uint8_t> buf(rgb.size());
  const int h = rgb.height(), w = rgb.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] = rgb(c, y, x);
  detail::write_png(path, PNG_FORMAT_RGB, h, w, buf);
}

inline void write_png_gray(const std::string& path, const LabelMap& gray) {
  std::vector<std::uint8_t> buf(gray.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (gray[i] < 0 || gray[i] > 255) throw ImageIoError("gray value outside 0..255");
    buf[i] = static_cast<std::uint8_t>(gray[i]);
  }
  detail::write_png(path, PNG_FORMAT_GRAY, gray.height(), gray.width(), buf);
}

/// Float image in [0, 1] -> bytes.
inline Tensor<std::uint8_t> to_bytes(const Tensor<float>& image) {
  Tensor<std::uint8_t> out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

}  // namespace aseg
