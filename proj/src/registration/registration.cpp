#include "deepsum/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace deepsum {
namespace {

std::vector<Shift> candidates_in_tie_order(int bound) {
  std::vector<Shift> out;
  for (int dy = -bound; dy <= bound; ++dy) {
    for (int dx = -bound; dx <= bound; ++dx) out.push_back({dy, dx});
  }
  std::stable_sort(out.begin(), out.end(), [](const Shift& a, const Shift& b) {
    const int na = std::abs(a.dy) + std::abs(a.dx), nb = std::abs(b.dy) + std::abs(b.dx);
    if (na != nb) return na < nb;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
  });
  return out;
}

Shift search(const Image& ref, const Image& mov, int bound, const Mask* ref_mask, const Mask* mov_mask) {
  if (ref.height != mov.height || ref.width != mov.width) {
    throw std::invalid_argument("estimate_shift needs equal image dimensions");
  }
  if (bound < 0) throw std::invalid_argument("shift bound must be non-negative");
  const long h = static_cast<long>(ref.height), w = static_cast<long>(ref.width);
  auto usable = [&](long y, long x, long sy, long sx) {
    return (!mov_mask || mov_mask->bits[y * w + x]) && (!ref_mask || ref_mask->bits[sy * w + sx]);
  };

  Shift best{};
  double best_score = -2.0;
  bool found = false;
  for (const Shift& s : candidates_in_tie_order(bound)) {
    const long y0 = std::max(0L, static_cast<long>(s.dy)), y1 = std::min(h, h + s.dy);
    const long x0 = std::max(0L, static_cast<long>(s.dx)), x1 = std::min(w, w + s.dx);
    double sum_m = 0.0, sum_r = 0.0;
    std::size_t n = 0;
    for (long y = y0; y < y1; ++y) {
      for (long x = x0; x < x1; ++x) {
        const long sy = y - s.dy, sx = x - s.dx;
        if (!usable(y, x, sy, sx)) continue;
        sum_m += mov.pixels[y * w + x];
        sum_r += ref.pixels[sy * w + sx];
        ++n;
      }
    }
    if (n < kMinOverlapPixels) continue;
    const double mean_m = sum_m / static_cast<double>(n), mean_r = sum_r / static_cast<double>(n);
    double smr = 0.0, smm = 0.0, srr = 0.0;
    for (long y = y0; y < y1; ++y) {
      for (long x = x0; x < x1; ++x) {
        const long sy = y - s.dy, sx = x - s.dx;
        if (!usable(y, x, sy, sx)) continue;
        const double a = mov.pixels[y * w + x] - mean_m;
        const double b = ref.pixels[sy * w + sx] - mean_r;
        smr += a * b;
        smm += a * a;
        srr += b * b;
      }
    }
    const double denom = std::sqrt(smm) * std::sqrt(srr);
    const double score = denom > 0.0 ? smr / denom : 0.0;
    if (!found || score > best_score) {
      best = s;
      best_score = score;
      found = true;
    }
  }
  if (!found) {
    throw InsufficientOverlap("insufficient overlap: fewer than " + std::to_string(kMinOverlapPixels) +
                              " mutually reliable pixels at every candidate shift");
  }
  return best;
}

}  // namespace

Shift estimate_shift(const Image& reference, const Image& moving, int bound) {
  return search(reference, moving, bound, nullptr, nullptr);
}

Shift estimate_shift(const Image& reference, const Image& moving, int bound, const Mask& reference_mask,
                     const Mask& moving_mask) {
  if (reference_mask.height != reference.height || reference_mask.width != reference.width ||
      moving_mask.height != moving.height || moving_mask.width != moving.width) {
    throw std::invalid_argument("estimate_shift masks must match their images");
  }
  return search(reference, moving, bound, &reference_mask, &moving_mask);
}

Image apply_shift(const Image& image, Shift s) {
  Image out(image.height, image.width);
  out.band = image.band;
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  for (long y = 0; y < h; ++y) {
    const long sy = std::clamp(y - s.dy, 0L, h - 1);
    for (long x = 0; x < w; ++x) {
      const long sx = std::clamp(x - s.dx, 0L, w - 1);
      out.pixels[y * w + x] = image.pixels[sy * w + sx];
    }
  }
  return out;
}

RegisteredStack register_stack(const std::vector<Image>& images, const std::vector<Mask>& masks,
                               std::size_t reference, int bound) {
  if (images.size() != masks.size() || reference >= images.size()) {
    throw std::invalid_argument("register_stack: inconsistent stack");
  }
  RegisteredStack out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Shift s{};
    if (i != reference) {
      try {
        s = estimate_shift(images[reference], images[i], bound, masks[reference], masks[i]);
      } catch (const InsufficientOverlap&) {
        s = Shift{};
      }
    }
    out.images.push_back(apply_shift(images[i], -s));
    out.masks.push_back(shift_mask(masks[i], -s.dy, -s.dx, bound));
    out.shifts.push_back(s);
  }
  return out;
}

}  // namespace deepsum
