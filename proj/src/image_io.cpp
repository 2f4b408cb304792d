#include "personerf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace personerf {

namespace {

png_uint_32 png_format(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
  }
  throw ImageError("unsupported channel count " + std::to_string(channels));
}

}  // namespace

Image8 read_png(const std::filesystem::path& path, int channels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageError("cannot read png " + path.string() + ": " + img.message);
  img.format = png_format(channels);
  Image8 out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("cannot decode png " + path.string() + ": " + msg);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Image8& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
    throw ImageError("image buffer does not match its dimensions");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = png_format(image.channels);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw ImageError(std::string("png size query failed: ") + img.message);
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&img, bytes.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw ImageError(std::string("png encoding failed: ") + img.message);
  bytes.resize(size);
  return bytes;
}

namespace {

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("failed writing " + path.string());
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) { write_bytes(path, encode_png(image)); }

std::vector<std::uint8_t> encode_png16(const std::vector<std::uint16_t>& gray, int width, int height) {
  if (width < 1 || height < 1 || gray.size() != static_cast<std::size_t>(width) * height)
    throw ImageError("image buffer does not match its dimensions");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = PNG_FORMAT_LINEAR_Y;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, gray.data(), 0, nullptr))
    throw ImageError(std::string("png size query failed: ") + img.message);
  std::vector<std::uint8_t> bytes(size);
  if (!png_image_write_to_memory(&img, bytes.data(), &size, 0, gray.data(), 0, nullptr))
    throw ImageError(std::string("png encoding failed: ") + img.message);
  bytes.resize(size);
  return bytes;
}

void write_png16(const std::filesystem::path& path, const std::vector<std::uint16_t>& gray, int width, int height) {
  write_bytes(path, encode_png16(gray, width, height));
}

std::vector<std::uint16_t> read_png16(const std::filesystem::path& path, int* width, int* height) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw ImageError("cannot read png " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_LINEAR_Y;
  std::vector<std::uint16_t> out(static_cast<std::size_t>(img.width) * img.height);
  if (!png_image_finish_read(&img, nullptr, out.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError("cannot decode png " + path.string() + ": " + msg);
  }
  if (width) *width = static_cast<int>(img.width);
  if (height) *height = static_cast<int>(img.height);
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image8 rgb_image(const MatX<float>& color, int width, int height) {
  Image8 out(width, height, 3);
  for (int p = 0; p < width * height; ++p)
    for (int c = 0; c < 3; ++c) out.pixels[3 * p + c] = to_byte(color(c, p));
  return out;
}

Image8 rgba_image(const MatX<float>& color, const VecX<float>& alpha, int width, int height) {
  Image8 out(width, height, 4);
  for (int p = 0; p < width * height; ++p) {
    const double a = alpha[p];
    for (int c = 0; c < 3; ++c) out.pixels[4 * p + c] = to_byte(a > 1e-6 ? color(c, p) / a : 0.0);
    out.pixels[4 * p + 3] = to_byte(a);
  }
  return out;
}

}  // namespace personerf
