#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ginv/errors.hpp"
#include "ginv/tensor.hpp"

namespace ginv {

// One RGB image as a [3,H,W] tensor in [-1,1]; files map [0,255] <-> [-1,1]
// linearly via x/127.5 - 1.
struct ImageSample {
  Tensor pixels;
  int label = -1;  // < 0 means unlabeled

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
};

inline float byte_to_unit(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

inline std::uint8_t unit_to_byte(float v) {
  const float x = std::round((v + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(x < 0.0f ? 0.0f : (x > 255.0f ? 255.0f : x));
}

// Planar [3,H,W] floats -> interleaved RGB bytes.
inline std::vector<std::uint8_t> image_to_bytes(const ImageSample& img) {
  const std::size_t H = img.height(), W = img.width();
  std::vector<std::uint8_t> out(H * W * 3);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out[(y * W + x) * 3 + c] = unit_to_byte(img.pixels.value()[(c * H + y) * W + x]);
  return out;
}

inline ImageSample image_from_bytes(const std::vector<std::uint8_t>& rgb, std::size_t H,
                                    std::size_t W, int label = -1) {
  std::vector<float> data(3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        data[(c * H + y) * W + x] = byte_to_unit(rgb[(y * W + x) * 3 + c]);
  ImageSample img;
  img.pixels = Tensor::create({3, H, W}, std::move(data));
  img.label = label;
  return img;
}

inline ImageSample load_image(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw FileMissingError("cannot open image: " + path);
  png_byte header[8];
  if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8)) {
    std::fclose(fp);
    throw CorruptFileError("not a PNG stream: " + path);
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw CorruptFileError("libpng init failed");
  }
  std::vector<std::uint8_t> rgb;
  std::size_t H = 0, W = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw CorruptFileError("corrupt PNG stream: " + path);
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_RGB || depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw FormatError("image is not 8-bit RGB: " + path);
  }
  W = png_get_image_width(png, info);
  H = png_get_image_height(png, info);
  rgb.resize(H * W * 3);
  std::vector<png_bytep> rows(H);
  for (std::size_t y = 0; y < H; ++y) rows[y] = rgb.data() + y * W * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return image_from_bytes(rgb, H, W);
}

inline void save_image(const ImageSample& img, const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write image: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng init failed");
  }
  auto rgb = image_to_bytes(img);
  const std::size_t H = img.height(), W = img.width();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(H);
  for (std::size_t y = 0; y < H; ++y) rows[y] = rgb.data() + y * W * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace ginv
