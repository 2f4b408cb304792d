#pragma once

#include "personerf/common.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace personerf {

class ImageError : public Error {
 public:
  using Error::Error;
};

/// Interleaved 8-bit image, rows top to bottom.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 3 rgb, 4 rgba
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, int c) : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t& at(int x, int y, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
};

/// Reads any PNG, converting to 8 bits per channel with `channels` channels.
Image8 read_png(const std::filesystem::path& path, int channels);
std::vector<std::uint8_t> encode_png(const Image8& image);
void write_png(const std::filesystem::path& path, const Image8& image);

/// 16-bit single-channel PNG stored linearly (no gamma conversion).
std::vector<std::uint8_t> encode_png16(const std::vector<std::uint16_t>& gray, int width, int height);
void write_png16(const std::filesystem::path& path, const std::vector<std::uint16_t>& gray, int width, int height);
std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, int* width = nullptr, int* height = nullptr);

std::uint8_t to_byte(double v);

/// 3 x (W*H) float colors in [0, 1] to an rgb image.
Image8 rgb_image(const MatX<float>& color, int width, int height);

/// Premultiplied color and alpha to a straight-alpha rgba image.
Image8 rgba_image(const MatX<float>& color, const VecX<float>& alpha, int width, int height);

}  // namespace personerf
