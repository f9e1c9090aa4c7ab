#include "deepsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace deepsum {
namespace {

constexpr double kMseFloor = 1e-12;

void check_inputs(std::size_t h, std::size_t w, const Image& hr, const Mask& hr_mask, const Mask& joint_clear, int d) {
  if (d < 0) throw std::invalid_argument("crop border must be non-negative");
  if (hr.height != h || hr.width != w || hr_mask.height != h || hr_mask.width != w || joint_clear.height != h ||
      joint_clear.width != w) {
    throw std::invalid_argument("SR, HR and masks must share dimensions");
  }
  if (static_cast<std::size_t>(2 * d) >= h || static_cast<std::size_t>(2 * d) >= w) {
    throw std::invalid_argument("image too small for crop border " + std::to_string(d));
  }
}

// Offsets in tie-break order.
std::vector<std::pair<int, int>> offsets(int d) {
  std::vector<std::pair<int, int>> out;
  for (int u = 0; u <= 2 * d; ++u) {
    for (int v = 0; v <= 2 * d; ++v) out.emplace_back(u, v);
  }
  std::stable_sort(out.begin(), out.end(), [d](const auto& a, const auto& b) {
    return std::abs(a.first - d) + std::abs(a.second - d) < std::abs(b.first - d) + std::abs(b.second - d);
  });
  return out;
}

CorrectedScore search(const double* sr, std::size_t h, std::size_t w, const Image& hr, const Mask& hr_mask,
                      const Mask& joint_clear, int d) {
  check_inputs(h, w, hr, hr_mask, joint_clear, d);
  const std::size_t ch = h - 2 * d, cw = w - 2 * d, dd = static_cast<std::size_t>(d);
  CorrectedScore best;
  bool found = false;
  for (const auto& [u, v] : offsets(d)) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < ch; ++y) {
      for (std::size_t x = 0; x < cw; ++x) {
        const std::size_t hi = (y + u) * w + (x + v), si = (y + dd) * w + (x + dd);
        if (!hr_mask.bits[hi] || !joint_clear.bits[si]) continue;
        sum += hr.pixels[hi] - sr[si];
        ++n;
      }
    }
    if (n == 0) continue;
    const double b = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t y = 0; y < ch; ++y) {
      for (std::size_t x = 0; x < cw; ++x) {
        const std::size_t hi = (y + u) * w + (x + v), si = (y + dd) * w + (x + dd);
        if (!hr_mask.bits[hi] || !joint_clear.bits[si]) continue;
        const double r = hr.pixels[hi] - (sr[si] + b);
        sq += r * r;
      }
    }
    const double mse = sq / static_cast<double>(n);
    if (!found || mse < best.value) {
      best.value = mse;
      best.u = u;
      best.v = v;
      best.brightness_b = b;
      best.clear_pixel_count = n;
      best.clear_fraction = static_cast<double>(n) / static_cast<double>(ch * cw);
      found = true;
    }
  }
  if (!found) throw UnscorableSample("unscorable sample: no clear pixels at any offset");
  return best;
}

// Separable Gaussian filtering over fully-contained windows.
std::vector<double> valid_filter(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * img[y * w + x + t];
      tmp[y * ow + x] = acc;
    }
  }
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += taps[t] * tmp[(y + t) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

CorrectedScore corrected_mse(const Image& sr, const Image& hr, const Mask& hr_mask, const Mask& joint_clear, int d) {
  return search(sr.pixels.data(), sr.height, sr.width, hr, hr_mask, joint_clear, d);
}

Tensor corrected_loss(const Tensor& sr, const Image& hr, const Mask& hr_mask, const Mask& joint_clear, int d,
                      CorrectedScore* score) {
  if (sr.rank() != 4 || sr.dim(0) != 1 || sr.dim(3) != 1) {
    throw ShapeError("corrected_loss expects [1,H,W,1], got " + shape_str(sr.shape()));
  }
  const std::size_t h = sr.dim(1), w = sr.dim(2);
  const CorrectedScore best = search(sr.values().data(), h, w, hr, hr_mask, joint_clear, d);
  if (score) *score = best;
  // Residuals at the chosen offset; b's own dependence on sr cancels in the
  // gradient because the residuals have zero mean over the clear set.
  std::vector<double> grad_coeff(h * w, 0.0);
  const std::size_t ch = h - 2 * d, cw = w - 2 * d, dd = static_cast<std::size_t>(d);
  const double scale_factor = -2.0 / static_cast<double>(best.clear_pixel_count);
  const auto s = sr.values();
  for (std::size_t y = 0; y < ch; ++y) {
    for (std::size_t x = 0; x < cw; ++x) {
      const std::size_t hi = (y + best.u) * w + (x + best.v), si = (y + dd) * w + (x + dd);
      if (!hr_mask.bits[hi] || !joint_clear.bits[si]) continue;
      grad_coeff[si] = scale_factor * (hr.pixels[hi] - (s[si] + best.brightness_b));
    }
  }
  return Tensor::make_result(Shape{1}, {best.value}, {sr}, [coeff = std::move(grad_coeff)](detail::Node& self) {
    double* g = self.parents[0]->grad_buffer().data();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < coeff.size(); ++i) g[i] += up * coeff[i];
  });
}

double psnr_from_mse(double mse) {
  if (mse < kMseFloor) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(kPixelMaxValue * kPixelMaxValue / mse));
}

CorrectedScore mpsnr(const Image& sr, const Image& hr, const Mask& hr_mask, const Mask& joint_clear, int d) {
  CorrectedScore s = corrected_mse(sr, hr, hr_mask, joint_clear, d);
  s.value = psnr_from_mse(s.value);
  return s;
}

SsimTerms ssim_terms(const Image& x, const Image& y) {
  if (x.height != y.height || x.width != y.width) throw std::invalid_argument("SSIM inputs differ in size");
  std::size_t k = std::min<std::size_t>({11, x.height, x.width});
  if (k % 2 == 0) --k;
  std::vector<double> taps(k);
  const double c = static_cast<double>(k / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    taps[i] = std::exp(-0.5 * (double(i) - c) * (double(i) - c) / (1.5 * 1.5));
    total += taps[i];
  }
  for (double& t : taps) t /= total;

  const std::size_t n = x.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x.pixels[i] * x.pixels[i];
    yy[i] = y.pixels[i] * y.pixels[i];
    xy[i] = x.pixels[i] * y.pixels[i];
  }
  const auto mx = valid_filter(x.pixels, x.height, x.width, taps);
  const auto my = valid_filter(y.pixels, x.height, x.width, taps);
  const auto sxx = valid_filter(xx, x.height, x.width, taps);
  const auto syy = valid_filter(yy, x.height, x.width, taps);
  const auto sxy = valid_filter(xy, x.height, x.width, taps);
  const double c1 = (0.01 * kPixelMaxValue) * (0.01 * kPixelMaxValue);
  const double c2 = (0.03 * kPixelMaxValue) * (0.03 * kPixelMaxValue);
  const double c3 = c2 / 2.0;
  SsimTerms out;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = std::max(0.0, sxx[i] - mx[i] * mx[i]);
    const double vy = std::max(0.0, syy[i] - my[i] * my[i]);
    const double cov = sxy[i] - mx[i] * my[i];
    const double lum = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
    const double con = (2.0 * std::sqrt(vx * vy) + c2) / (vx + vy + c2);
    const double str = (cov + c3) / (std::sqrt(vx * vy) + c3);
    const double cs = (2.0 * cov + c2) / (vx + vy + c2);
    out.ssim += lum * cs;
    out.luminance += lum;
    out.contrast += con;
    out.structure += str;
  }
  const double m = static_cast<double>(mx.size());
  out.ssim /= m;
  out.luminance /= m;
  out.contrast /= m;
  out.structure /= m;
  return out;
}

Mask joint_clear_mask(const std::vector<Mask>& masks) {
  if (masks.empty()) throw std::invalid_argument("joint_clear_mask needs at least one mask");
  Mask out = masks[0];
  for (std::size_t i = 1; i < masks.size(); ++i) out = mask_or(out, masks[i]);
  return out;
}

std::string report_line(const std::string& scene_id, const CorrectedScore& score, double ssim_value) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "scene=%s mpsnr_db=%.6f ssim=%.6f u=%d v=%d b=%.6f clear=%.6f", scene_id.c_str(),
                score.value, ssim_value, score.u, score.v, score.brightness_b, score.clear_fraction);
  return buf;
}

}  // namespace deepsum
