#include "deepsum/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace deepsum {
namespace {

// Keys cubic with a = -0.5; t in [0, 1) is the offset from the left tap.
std::array<double, 4> cubic_weights(double t) {
  constexpr double a = -0.5;
  auto k = [](double x) {
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
  };
  return {k(t + 1.0), k(t), k(1.0 - t), k(2.0 - t)};
}

struct Taps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

std::vector<Taps> resample_taps(std::size_t n_in, std::size_t r) {
  std::vector<Taps> taps(n_in * r);
  const long last = static_cast<long>(n_in) - 1;
  for (std::size_t o = 0; o < taps.size(); ++o) {
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(r) - 0.5;
    const double base = std::floor(src);
    const long i0 = static_cast<long>(base);
    taps[o].weight = cubic_weights(src - base);
    for (int k = 0; k < 4; ++k) taps[o].index[k] = static_cast<std::size_t>(std::clamp(i0 - 1 + k, 0L, last));
  }
  return taps;
}

void check_same_dims(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) throw std::invalid_argument("mask dimensions differ");
}

}  // namespace

const char* band_name(Band band) {
  switch (band) {
    case Band::Nir: return "NIR";
    case Band::Red: return "RED";
    case Band::Synthetic: return "synthetic";
  }
  return "synthetic";
}

std::size_t Mask::count_clear() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

double Mask::clear_fraction() const {
  return bits.empty() ? 0.0 : static_cast<double>(count_clear()) / static_cast<double>(bits.size());
}

Image clip_lr(const Image& image) {
  Image out = image;
  for (double& p : out.pixels) p = std::min(p, kLrMaxValue);
  return out;
}

Image bicubic_upsample(const Image& image, std::size_t r) {
  if (r < 1) throw std::invalid_argument("upsampling factor must be at least 1");
  if (r == 1) return image;
  const std::size_t h = image.height, w = image.width;
  const auto col_taps = resample_taps(w, r);
  const auto row_taps = resample_taps(h, r);

  // Horizontal pass: h x (r*w).
  std::vector<double> tmp(h * w * r);
  for (std::size_t y = 0; y < h; ++y) {
    const double* src = &image.pixels[y * w];
    double* dst = &tmp[y * w * r];
    for (std::size_t x = 0; x < w * r; ++x) {
      const Taps& t = col_taps[x];
      dst[x] = t.weight[0] * src[t.index[0]] + t.weight[1] * src[t.index[1]] + t.weight[2] * src[t.index[2]] +
               t.weight[3] * src[t.index[3]];
    }
  }
  Image out(h * r, w * r);
  out.band = image.band;
  const std::size_t ow = w * r;
  for (std::size_t y = 0; y < h * r; ++y) {
    const Taps& t = row_taps[y];
    double* dst = &out.pixels[y * ow];
    const double* s0 = &tmp[t.index[0] * ow];
    const double* s1 = &tmp[t.index[1] * ow];
    const double* s2 = &tmp[t.index[2] * ow];
    const double* s3 = &tmp[t.index[3] * ow];
    for (std::size_t x = 0; x < ow; ++x) {
      dst[x] = t.weight[0] * s0[x] + t.weight[1] * s1[x] + t.weight[2] * s2[x] + t.weight[3] * s3[x];
    }
  }
  return out;
}

Mask upsample_mask(const Mask& mask, std::size_t r) {
  if (r < 1) throw std::invalid_argument("upsampling factor must be at least 1");
  Mask out(mask.height * r, mask.width * r);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) out.bits[y * out.width + x] = mask.bits[(y / r) * mask.width + x / r];
  }
  return out;
}

Mask shift_mask(const Mask& mask, int dy, int dx, int bound) {
  if (std::abs(dy) > bound || std::abs(dx) > bound) {
    throw std::invalid_argument("mask shift (" + std::to_string(dy) + ", " + std::to_string(dx) +
                                ") exceeds bound " + std::to_string(bound));
  }
  Mask out(mask.height, mask.width, false);
  const long h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
  for (long y = 0; y < h; ++y) {
    const long sy = y - dy;
    if (sy < 0 || sy >= h) continue;
    for (long x = 0; x < w; ++x) {
      const long sx = x - dx;
      if (sx < 0 || sx >= w) continue;
      out.bits[y * w + x] = mask.bits[sy * w + sx];
    }
  }
  return out;
}

Mask mask_and(const Mask& a, const Mask& b) {
  check_same_dims(a, b);
  Mask out(a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.bits[i] = (a.bits[i] && b.bits[i]) ? 1 : 0;
  return out;
}

Mask mask_or(const Mask& a, const Mask& b) {
  check_same_dims(a, b);
  Mask out(a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.bits[i] = (a.bits[i] || b.bits[i]) ? 1 : 0;
  return out;
}

Image fill_masked(const Image& image, const Mask& mask) {
  const double fill = masked_mean(image, mask);
  Image out = image;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask.bits[i]) out.pixels[i] = fill;
  }
  return out;
}

double masked_mean(const Image& image, const Mask& mask) {
  if (image.height != mask.height || image.width != mask.width) {
    throw std::invalid_argument("image and mask dimensions differ");
  }
  double sum = 0.0, all = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    all += image.pixels[i];
    if (mask.bits[i]) {
      sum += image.pixels[i];
      ++n;
    }
  }
  if (n == 0) return image.size() ? all / static_cast<double>(image.size()) : 0.0;
  return sum / static_cast<double>(n);
}

Image add_offset(const Image& image, double offset) {
  Image out = image;
  for (double& p : out.pixels) p += offset;
  return out;
}

Image crop(const Image& image, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > image.height || x0 + w > image.width) throw std::out_of_range("crop window outside image");
  Image out(h, w);
  out.band = image.band;
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(&image.pixels[(y0 + y) * image.width + x0], w, &out.pixels[y * w]);
  }
  return out;
}

Mask crop(const Mask& mask, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  if (y0 + h > mask.height || x0 + w > mask.width) throw std::out_of_range("crop window outside mask");
  Mask out(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(&mask.bits[(y0 + y) * mask.width + x0], w, &out.bits[y * w]);
  }
  return out;
}

}  // namespace deepsum
