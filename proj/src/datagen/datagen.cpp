#include "deepsum/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "deepsum/errors.hpp"

namespace deepsum {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> blur_axis(const std::vector<double>& src, std::size_t h, std::size_t w,
                              const std::vector<double>& taps, bool vertical) {
  const long radius = static_cast<long>(taps.size() / 2);
  std::vector<double> out(src.size());
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  for (long y = 0; y < lh; ++y) {
    for (long x = 0; x < lw; ++x) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k) {
        const long sy = vertical ? std::clamp(y + k, 0L, lh - 1) : y;
        const long sx = vertical ? x : std::clamp(x + k, 0L, lw - 1);
        acc += taps[k + radius] * src[sy * lw + sx];
      }
      out[y * lw + x] = acc;
    }
  }
  return out;
}

// Stamps ellipses into mask (false) until at least target of it is covered.
void stamp_clouds(Mask& mask, double target, std::mt19937_64& rng) {
  const double h = static_cast<double>(mask.height), w = static_cast<double>(mask.width);
  std::uniform_real_distribution<double> cy(0.0, h), cx(0.0, w), ang(0.0, kPi);
  std::uniform_real_distribution<double> axis(1.0, std::max(1.5, 0.3 * std::min(h, w)));
  const std::size_t needed = static_cast<std::size_t>(std::ceil(target * h * w));
  std::size_t masked = mask.size() - mask.count_clear();
  for (int attempt = 0; attempt < 200 && masked < needed; ++attempt) {
    const double y0 = cy(rng), x0 = cx(rng), a = axis(rng), b = axis(rng), t = ang(rng);
    const double c = std::cos(t), s = std::sin(t);
    for (std::size_t y = 0; y < mask.height; ++y) {
      for (std::size_t x = 0; x < mask.width; ++x) {
        const double u = double(y) + 0.5 - y0, v = double(x) + 0.5 - x0;
        const double p = (u * c + v * s) / a, q = (-u * s + v * c) / b;
        if (p * p + q * q <= 1.0 && mask.at(y, x)) {
          mask.set(y, x, false);
          ++masked;
        }
      }
    }
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void DegradationConfig::validate() const {
  if (r < 1) throw ConfigError("degradation r must be at least 1");
  if (!(cloud_coverage >= 0.0 && cloud_coverage < 1.0)) throw ConfigError("cloud_coverage must lie in [0, 1)");
  if (!(hr_cloud_coverage >= 0.0 && hr_cloud_coverage < 1.0)) throw ConfigError("hr_cloud_coverage must lie in [0, 1)");
  if (blur_sigma < 0.0 || noise_sigma < 0.0 || brightness_jitter < 0.0 || max_subpixel_shift < 0.0) {
    throw ConfigError("degradation magnitudes must be non-negative");
  }
  if (n_images < 1 || n_images_max < n_images) throw ConfigError("need 1 <= n_images <= n_images_max");
}

std::vector<double> gaussian_taps(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    taps[k + radius] = std::exp(-0.5 * double(k * k) / (sigma * sigma));
    total += taps[k + radius];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Image gaussian_blur(const Image& image, double sigma) {
  const auto taps = gaussian_taps(sigma);
  if (taps.size() == 1) return image;
  Image out = image;
  out.pixels = blur_axis(blur_axis(image.pixels, image.height, image.width, taps, false), image.height, image.width,
                         taps, true);
  return out;
}

Image subpixel_shift(const Image& image, double dy, double dx) {
  Image out(image.height, image.width);
  out.band = image.band;
  const long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
  auto px = [&](long y, long x) { return image.pixels[std::clamp(y, 0L, h - 1) * w + std::clamp(x, 0L, w - 1)]; };
  for (long y = 0; y < h; ++y) {
    const double sy = double(y) - dy;
    const double fy = std::floor(sy);
    const double ty = sy - fy;
    const long iy = static_cast<long>(fy);
    for (long x = 0; x < w; ++x) {
      const double sx = double(x) - dx;
      const double fx = std::floor(sx);
      const double tx = sx - fx;
      const long ix = static_cast<long>(fx);
      out.pixels[y * w + x] = (1 - ty) * ((1 - tx) * px(iy, ix) + tx * px(iy, ix + 1)) +
                              ty * ((1 - tx) * px(iy + 1, ix) + tx * px(iy + 1, ix + 1));
    }
  }
  return out;
}

Image decimate(const Image& image, std::size_t r) {
  if (r < 1 || image.height % r || image.width % r) {
    throw std::invalid_argument("image dimensions must be divisible by the decimation factor");
  }
  Image out(image.height / r, image.width / r);
  out.band = image.band;
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) out.at(y, x) = image.at(r * y + r / 2, r * x + r / 2);
  }
  return out;
}

Image degrade_clean(const Image& hr, double shift_dy_lr, double shift_dx_lr, const DegradationConfig& cfg) {
  const double r = static_cast<double>(cfg.r);
  Image moved = (shift_dy_lr == 0.0 && shift_dx_lr == 0.0) ? hr : subpixel_shift(hr, shift_dy_lr * r, shift_dx_lr * r);
  return decimate(gaussian_blur(moved, cfg.blur_sigma), cfg.r);
}

Image generate_hr_texture(std::size_t height, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uy(0.0, double(height)), ux(0.0, double(width));
  std::uniform_real_distribution<double> level(3000.0, 10000.0), unit(0.0, 1.0);
  std::normal_distribution<double> grain(0.0, 1.0);

  // Parcels: nearest-seed regions with a per-parcel level and gentle tilt.
  const std::size_t n_parcels = std::max<std::size_t>(4, height * width / 180);
  struct Parcel {
    double y, x, level, gy, gx;
  };
  std::vector<Parcel> parcels(n_parcels);
  for (auto& p : parcels) p = {uy(rng), ux(rng), level(rng), (unit(rng) - 0.5) * 120.0, (unit(rng) - 0.5) * 120.0};

  Image img(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < n_parcels; ++k) {
        const double dy = double(y) - parcels[k].y, dx = double(x) - parcels[k].x;
        const double d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      const Parcel& p = parcels[best];
      img.at(y, x) = p.level + p.gy * (double(y) - p.y) / 10.0 + p.gx * (double(x) - p.x) / 10.0;
    }
  }

  // Low-frequency shading.
  const double fy = 0.05 + 0.1 * unit(rng), fx = 0.05 + 0.1 * unit(rng), ph = 2 * kPi * unit(rng);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) img.at(y, x) += 500.0 * std::sin(fy * double(y) + fx * double(x) + ph);
  }

  // Linear features: bright roads and dark channels.
  const int n_lines = 1 + static_cast<int>(unit(rng) * 3.0);
  for (int l = 0; l < n_lines; ++l) {
    const double y0 = uy(rng), x0 = ux(rng), t = kPi * unit(rng);
    const double half_width = 0.6 + unit(rng) * 0.9;
    const double value = unit(rng) < 0.5 ? 12500.0 : 1800.0;
    const double ny = -std::sin(t), nx = std::cos(t);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dist = std::abs((double(y) - y0) * nx - (double(x) - x0) * ny);
        if (dist <= half_width) img.at(y, x) = value;
      }
    }
  }

  for (double& v : img.pixels) v = std::clamp(std::round(v + 80.0 * grain(rng)), 0.0, kLrMaxValue);
  return img;
}

SyntheticScene synthesize_scene(const Image& hr_source, const DegradationConfig& cfg, const std::string& scene_id) {
  cfg.validate();
  if (hr_source.height % cfg.r || hr_source.width % cfg.r) {
    throw std::invalid_argument("HR source " + std::to_string(hr_source.height) + "x" +
                                std::to_string(hr_source.width) + " is not divisible by r=" + std::to_string(cfg.r));
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> count(cfg.n_images, cfg.n_images_max);
  const std::size_t n = count(rng);
  std::uniform_real_distribution<double> shift(-cfg.max_subpixel_shift, cfg.max_subpixel_shift);
  std::uniform_real_distribution<double> jitter(-cfg.brightness_jitter, cfg.brightness_jitter);
  std::uniform_real_distribution<double> coverage(0.0, 2.0 * cfg.cloud_coverage);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<Image> lr(n);
  std::vector<Mask> masks(n);
  std::vector<ImageTruth> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    ImageTruth& t = truth[i];
    t.source_index = i;
    t.shift_dy = cfg.max_subpixel_shift > 0.0 ? shift(rng) : 0.0;
    t.shift_dx = cfg.max_subpixel_shift > 0.0 ? shift(rng) : 0.0;
    t.offset = cfg.brightness_jitter > 0.0 ? jitter(rng) : 0.0;
    Image img = degrade_clean(hr_source, t.shift_dy, t.shift_dx, cfg);
    for (double& p : img.pixels) p += t.offset + (cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise(rng) : 0.0);
    Mask m(img.height, img.width, true);
    if (cfg.cloud_coverage > 0.0) stamp_clouds(m, std::min(0.9, coverage(rng)), rng);
    for (std::size_t k = 0; k < img.size(); ++k) {
      if (!m.bits[k]) img.pixels[k] = cfg.cloud_value;
      img.pixels[k] = std::clamp(std::round(img.pixels[k]), 0.0, kLrMaxValue);
    }
    t.clear_fraction = m.clear_fraction();
    lr[i] = std::move(img);
    masks[i] = std::move(m);
  }

  SyntheticScene out;
  out.scene.id = scene_id;
  out.truth.scene_id = scene_id;
  out.truth.r = cfg.r;
  for (std::size_t idx : clearest_order(masks)) {
    out.scene.lr.push_back(std::move(lr[idx]));
    out.scene.lr_masks.push_back(std::move(masks[idx]));
    out.truth.images.push_back(truth[idx]);
  }
  Image hr = hr_source;
  for (double& p : hr.pixels) p = std::clamp(std::round(p), 0.0, kPixelMaxValue);
  Mask hr_mask(hr.height, hr.width, true);
  if (cfg.hr_cloud_coverage > 0.0) stamp_clouds(hr_mask, cfg.hr_cloud_coverage, rng);
  out.scene.hr = std::move(hr);
  out.scene.hr_mask = std::move(hr_mask);
  return out;
}

void save_truth(const std::filesystem::path& path, const SceneTruth& truth) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "# image source_index shift_dy_lr shift_dx_lr offset clear_fraction\n";
  os << "scene " << truth.scene_id << '\n';
  os << "r " << truth.r << '\n';
  for (std::size_t i = 0; i < truth.images.size(); ++i) {
    const ImageTruth& t = truth.images[i];
    os << "image " << i << ' ' << t.source_index << ' ' << fmt(t.shift_dy) << ' ' << fmt(t.shift_dx) << ' '
       << fmt(t.offset) << ' ' << fmt(t.clear_fraction) << '\n';
  }
  if (!os) throw DataError("failed writing " + path.string());
}

SceneTruth load_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  SceneTruth truth;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "scene") {
      ls >> truth.scene_id;
    } else if (key == "r") {
      ls >> truth.r;
    } else if (key == "image") {
      std::size_t index = 0;
      ImageTruth t;
      ls >> index >> t.source_index >> t.shift_dy >> t.shift_dx >> t.offset >> t.clear_fraction;
      if (!ls || index != truth.images.size()) throw DataError("malformed image line in " + path.string());
      truth.images.push_back(t);
    } else {
      throw DataError("unknown record '" + key + "' in " + path.string());
    }
  }
  return truth;
}

void PatchPolicy::validate(std::size_t r) const {
  if (patch_hr == 0 || patch_hr % r) throw ConfigError("patch_hr must be a positive multiple of r");
  if (!(min_clear_lr > 0.0 && min_clear_lr <= 1.0 && min_clear_hr > 0.0 && min_clear_hr <= 1.0)) {
    throw ConfigError("clear-fraction thresholds must lie in (0, 1]");
  }
  if (min_images < 1) throw ConfigError("min_images must be positive");
}

RegisteredStack prepare_ilr(const Scene& scene, std::size_t r, int bound) {
  std::vector<Image> ilr;
  std::vector<Mask> masks;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    ilr.push_back(bicubic_upsample(fill_masked(scene.lr[i], scene.lr_masks[i]), r));
    masks.push_back(upsample_mask(scene.lr_masks[i], r));
  }
  return register_stack(ilr, masks, clearest_order(scene.lr_masks).front(), bound);
}

std::vector<std::size_t> select_patch_images(const Scene& scene, const PatchPolicy& policy, std::size_t r,
                                             std::size_t y_lr, std::size_t x_lr) {
  const std::size_t p_lr = policy.patch_hr / r;
  const Mask hr_mask = crop(*scene.hr_mask, r * y_lr, r * x_lr, policy.patch_hr, policy.patch_hr);
  if (hr_mask.clear_fraction() < policy.min_clear_hr) return {};
  std::vector<std::pair<std::size_t, std::size_t>> qualifying;  // (clear count, image)
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const std::size_t clear = crop(scene.lr_masks[i], y_lr, x_lr, p_lr, p_lr).count_clear();
    if (static_cast<double>(clear) >= policy.min_clear_lr * static_cast<double>(p_lr * p_lr)) {
      qualifying.emplace_back(clear, i);
    }
  }
  if (qualifying.size() < policy.min_images) return {};
  std::stable_sort(qualifying.begin(), qualifying.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < policy.min_images; ++k) chosen.push_back(qualifying[k].second);
  return chosen;
}

std::vector<PatchSample> extract_patches(const Scene& scene, const PatchPolicy& policy, std::size_t r, int bound,
                                         std::mt19937_64& rng) {
  policy.validate(r);
  if (!scene.hr || !scene.hr_mask) throw DataError("scene " + scene.id + " has no HR target");
  const std::size_t lr_h = scene.lr.at(0).height, lr_w = scene.lr.at(0).width;
  const std::size_t p_lr = policy.patch_hr / r;
  if (p_lr > lr_h || p_lr > lr_w) throw ConfigError("patch larger than scene " + scene.id);
  if (scene.size() < policy.min_images) return {};

  const RegisteredStack reg = prepare_ilr(scene, r, bound);
  std::uniform_int_distribution<std::size_t> py(0, lr_h - p_lr), px(0, lr_w - p_lr);
  std::vector<PatchSample> out;
  const std::size_t attempts = policy.max_attempts_factor * policy.patches_per_scene;
  for (std::size_t a = 0; a < attempts && out.size() < policy.patches_per_scene; ++a) {
    const std::size_t y = py(rng), x = px(rng);
    const auto chosen = select_patch_images(scene, policy, r, y, x);
    if (chosen.empty()) continue;
    PatchSample s;
    for (std::size_t i : chosen) {
      s.ilr.push_back(crop(reg.images[i], r * y, r * x, policy.patch_hr, policy.patch_hr));
      s.masks.push_back(crop(reg.masks[i], r * y, r * x, policy.patch_hr, policy.patch_hr));
    }
    s.hr = crop(*scene.hr, r * y, r * x, policy.patch_hr, policy.patch_hr);
    s.hr_mask = crop(*scene.hr_mask, r * y, r * x, policy.patch_hr, policy.patch_hr);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace deepsum
