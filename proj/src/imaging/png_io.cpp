#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "deepsum/errors.hpp"
#include "deepsum/imaging.hpp"

namespace deepsum {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

// libpng reports through these instead of stderr; the message ends up in
// the DataError.
struct ErrorSink {
  char message[200] = "unknown libpng error";
};

void on_error(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
  std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

// Raw samples of a grayscale PNG, widened to 16 bits where needed.
struct GraySamples {
  std::size_t height = 0, width = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

// Buffers live in the caller so nothing with a destructor sits between
// setjmp and a possible longjmp.
bool read_gray(std::FILE* fp, GraySamples& out, std::vector<png_byte>& buffer, std::vector<png_bytep>& rows,
               ErrorSink& sink) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if ((color & PNG_COLOR_MASK_COLOR) != 0) {
    std::snprintf(sink.message, sizeof(sink.message), "color PNG where grayscale is required");
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  if (depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t bytes_per = depth == 16 ? 2 : 1;
  buffer.resize(static_cast<std::size_t>(w) * h * bytes_per);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * bytes_per;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.height = h;
  out.width = w;
  out.bit_depth = depth;
  out.samples.resize(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = bytes_per == 2 ? static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]) : buffer[i];
  }
  return true;
}

// Samples are big-endian per the PNG format, packed row after row.
bool write_gray(std::FILE* fp, std::size_t height, std::size_t width, int depth, const std::vector<png_byte>& data,
                std::vector<png_bytep>& rows, ErrorSink& sink) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, on_warning);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  rows.resize(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  const std::size_t stride = width * (depth == 16 ? 2 : 1);
  for (std::size_t y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(data.data() + y * stride);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

GraySamples read_file(const std::filesystem::path& path) {
  auto fp = open_file(path, "rb");
  GraySamples g;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  ErrorSink sink;
  if (!read_gray(fp.get(), g, buffer, rows, sink)) throw DataError(path.string() + ": " + sink.message);
  return g;
}

}  // namespace

void save_png16(const std::filesystem::path& path, const Image& image) {
  std::vector<png_byte> data(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::isfinite(image.pixels[i]) ? std::clamp(std::round(image.pixels[i]), 0.0, kPixelMaxValue) : 0.0;
    const auto s = static_cast<std::uint16_t>(v);
    data[2 * i] = static_cast<png_byte>(s >> 8);
    data[2 * i + 1] = static_cast<png_byte>(s & 0xff);
  }
  auto fp = open_file(path, "wb");
  std::vector<png_bytep> rows;
  ErrorSink sink;
  if (!write_gray(fp.get(), image.height, image.width, 16, data, rows, sink)) {
    throw DataError("failed writing " + path.string() + ": " + sink.message);
  }
}

Image load_png(const std::filesystem::path& path) {
  const GraySamples g = read_file(path);
  Image img(g.height, g.width);
  std::transform(g.samples.begin(), g.samples.end(), img.pixels.begin(), [](std::uint16_t s) { return double(s); });
  return img;
}

void save_mask_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<png_byte> data(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) data[i] = mask.bits[i] ? 255 : 0;
  auto fp = open_file(path, "wb");
  std::vector<png_bytep> rows;
  ErrorSink sink;
  if (!write_gray(fp.get(), mask.height, mask.width, 8, data, rows, sink)) {
    throw DataError("failed writing " + path.string() + ": " + sink.message);
  }
}

Mask load_mask_png(const std::filesystem::path& path) {
  const GraySamples g = read_file(path);
  Mask m(g.height, g.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.bits[i] = g.samples[i] != 0 ? 1 : 0;
  return m;
}

}  // namespace deepsum
