#pragma once

// Grayscale images and reliability masks in raw sensor counts.
//
// Pixels are kept as doubles in [0, 65535]; files store them as 16-bit
// unsigned PNG. Masks hold one byte per pixel, nonzero meaning clear.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace deepsum {

enum class Band { Nir, Red, Synthetic };

const char* band_name(Band band);

inline constexpr double kLrMaxValue = 16383.0;  // 14-bit sensor ceiling
inline constexpr double kPixelMaxValue = 65535.0;

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;
  Band band = Band::Synthetic;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }
};

struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, bool clear = true) : height(h), width(w), bits(h * w, clear ? 1 : 0) {}

  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool clear) { bits[y * width + x] = clear ? 1 : 0; }
  std::size_t size() const { return bits.size(); }
  std::size_t count_clear() const;
  double clear_fraction() const;
};

Image clip_lr(const Image& image);

/// Keys cubic convolution (a = -0.5) with edge replication. Output pixel
/// centers map to source coordinate (dst + 0.5) / r - 0.5.
Image bicubic_upsample(const Image& image, std::size_t r);

/// Nearest-neighbour replication of each mask pixel into an r x r block.
Mask upsample_mask(const Mask& mask, std::size_t r);

/// Content moves by (dy, dx), positive down/right; pixels entering from
/// outside the frame are unreliable. Throws if |dy| or |dx| exceeds bound.
Mask shift_mask(const Mask& mask, int dy, int dx, int bound);

Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);

/// Mean over clear pixels; plain mean when none are clear.
double masked_mean(const Image& image, const Mask& mask);
/// Copy with every masked pixel replaced by masked_mean(image, mask), so
/// later filtering cannot carry masked values into clear neighbours.
Image fill_masked(const Image& image, const Mask& mask);
Image add_offset(const Image& image, double offset);

/// Crop rows [y0, y0+h) and columns [x0, x0+w).
Image crop(const Image& image, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);
Mask crop(const Mask& mask, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

/// 16-bit grayscale PNG. Values are rounded and clamped to [0, 65535].
void save_png16(const std::filesystem::path& path, const Image& image);
/// Accepts 8- or 16-bit grayscale; throws DataError otherwise.
Image load_png(const std::filesystem::path& path);
/// Masks are written as 8-bit 0/255; any nonzero sample reads as clear.
void save_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask load_mask_png(const std::filesystem::path& path);

}  // namespace deepsum
