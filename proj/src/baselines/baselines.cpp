#include "deepsum/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "deepsum/datagen.hpp"
#include "deepsum/errors.hpp"

namespace deepsum {
namespace {

constexpr std::size_t kPowerIterations = 30;
constexpr std::size_t kDivergencePatience = 3;

long clamp_index(long i, long n) { return std::clamp(i, 0L, n - 1); }

// Blur with edge clamping: out(y, x) = sum k[a][b] in(y + a - c, x + b - c).
Image blur_clamped(const Image& in, const std::vector<double>& k, std::size_t ks) {
  const long h = long(in.height), w = long(in.width), c = long(ks / 2);
  Image out(in.height, in.width);
  out.band = in.band;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long a = 0; a < long(ks); ++a) {
        const long sy = clamp_index(y + a - c, h);
        for (long b = 0; b < long(ks); ++b) acc += k[a * ks + b] * in.pixels[sy * w + clamp_index(x + b - c, w)];
      }
      out.pixels[y * w + x] = acc;
    }
  }
  return out;
}

// Adjoint of apply_shift with edge replication.
Image shift_adjoint(const Image& in, Shift s) {
  const long h = long(in.height), w = long(in.width);
  Image out(in.height, in.width);
  for (long y = 0; y < h; ++y) {
    const long sy = clamp_index(y - s.dy, h);
    for (long x = 0; x < w; ++x) out.pixels[sy * w + clamp_index(x - s.dx, w)] += in.pixels[y * w + x];
  }
  return out;
}

void check_scene(const Scene& scene, const ForwardModel& model) {
  model.validate();
  if (scene.size() == 0) throw DataError("scene " + scene.id + " has no images");
  if (model.shifts.size() != scene.size()) {
    throw std::invalid_argument("forward model has " + std::to_string(model.shifts.size()) + " shifts for " +
                                std::to_string(scene.size()) + " images");
  }
}

std::size_t clear_total(const Scene& scene) {
  std::size_t n = 0;
  for (const auto& m : scene.lr_masks) n += m.count_clear();
  return n;
}

void axpy(double a, const Image& x, Image& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y.pixels[i] += a * x.pixels[i];
}

// Residuals A_i x - y_i with masked pixels zeroed.
std::vector<Image> masked_residuals(const Scene& scene, const ForwardModel& model, const Image& hr) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    Image e = model.simulate(hr, i);
    for (std::size_t p = 0; p < e.size(); ++p) {
      e.pixels[p] = scene.lr_masks[i].bits[p] ? e.pixels[p] - scene.lr[i].pixels[p] : 0.0;
    }
    out.push_back(std::move(e));
  }
  return out;
}

// sum_i A_i^T M_i A_i v / clear_total.
Image normal_operator(const Scene& scene, const ForwardModel& model, const Image& v, double inv_clear) {
  Image out(v.height, v.width);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    Image lr = model.simulate(v, i);
    for (std::size_t p = 0; p < lr.size(); ++p) {
      if (!scene.lr_masks[i].bits[p]) lr.pixels[p] = 0.0;
    }
    axpy(inv_clear, model.back_project(lr, i), out);
  }
  return out;
}

double norm(const Image& v) {
  double s = 0.0;
  for (double x : v.pixels) s += x * x;
  return std::sqrt(s);
}

double largest_eigenvalue(const Scene& scene, const ForwardModel& model, std::size_t h, std::size_t w,
                          double inv_clear) {
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  Image v(h, w);
  for (double& x : v.pixels) x = u(rng);
  double lambda = 0.0;
  for (std::size_t it = 0; it < kPowerIterations; ++it) {
    const double n = norm(v);
    if (n == 0.0) break;
    for (double& x : v.pixels) x /= n;
    Image hv = normal_operator(scene, model, v, inv_clear);
    double dot = 0.0;
    for (std::size_t p = 0; p < v.size(); ++p) dot += v.pixels[p] * hv.pixels[p];
    lambda = dot;
    v = std::move(hv);
  }
  return lambda;
}

double btv_objective(const Scene& scene, const ForwardModel& model, const Image& x, const BtvConfig& cfg) {
  double data = 0.0;
  for (const Image& e : masked_residuals(scene, model, x)) {
    for (double v : e.pixels) data += std::abs(v);
  }
  return data + cfg.reg_weight * btv_regularizer(x, cfg.radius, cfg.alpha);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Tracks the best iterate and the consecutive-increase guard.
struct Guard {
  SolverResult& result;
  double best = 0.0;
  std::size_t increases = 0;

  bool accept(const Image& x, double value) {
    const double prev = result.objective.back();
    result.objective.push_back(value);
    if (value < best) {
      best = value;
      result.image = x;
    }
    increases = value > prev ? increases + 1 : 0;
    if (increases >= kDivergencePatience) {
      result.stopped_early = true;
      return false;
    }
    return true;
  }
};

}  // namespace

ForwardModel ForwardModel::gaussian(double sigma, std::size_t r, std::vector<Shift> shifts) {
  const auto taps = gaussian_taps(sigma);
  ForwardModel m;
  m.kernel_size = taps.size();
  m.kernel.resize(taps.size() * taps.size());
  for (std::size_t a = 0; a < taps.size(); ++a) {
    for (std::size_t b = 0; b < taps.size(); ++b) m.kernel[a * taps.size() + b] = taps[a] * taps[b];
  }
  m.r = r;
  m.shifts = std::move(shifts);
  m.validate();
  return m;
}

void ForwardModel::validate() const {
  if (r < 1) throw std::invalid_argument("forward model needs r >= 1");
  if (kernel_size % 2 == 0 || kernel.size() != kernel_size * kernel_size) {
    throw std::invalid_argument("forward model kernel must be odd and square");
  }
  double sum = 0.0;
  for (double k : kernel) sum += k;
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("forward model kernel must sum to 1");
}

Image ForwardModel::simulate(const Image& hr, std::size_t image) const {
  return decimate(blur_clamped(apply_shift(hr, shifts.at(image)), kernel, kernel_size), r);
}

Image ForwardModel::back_project(const Image& lr, std::size_t image) const {
  const long h = long(lr.height * r), w = long(lr.width * r), c = long(kernel_size / 2), ks = long(kernel_size);
  Image blurred(lr.height * r, lr.width * r);
  for (std::size_t y = 0; y < lr.height; ++y) {
    for (std::size_t x = 0; x < lr.width; ++x) {
      const double v = lr.at(y, x);
      if (v == 0.0) continue;
      const long cy = long(r * y + r / 2), cx = long(r * x + r / 2);
      for (long a = 0; a < ks; ++a) {
        const long sy = clamp_index(cy + a - c, h);
        for (long b = 0; b < ks; ++b) blurred.pixels[sy * w + clamp_index(cx + b - c, w)] += kernel[a * ks + b] * v;
      }
    }
  }
  return shift_adjoint(blurred, shifts.at(image));
}

Scene clearest_subset(const Scene& scene, std::size_t n) {
  const auto order = clearest_order(scene.lr_masks);
  Scene out;
  out.id = scene.id;
  out.band = scene.band;
  out.hr = scene.hr;
  out.hr_mask = scene.hr_mask;
  for (std::size_t k = 0; k < std::min(n, order.size()); ++k) {
    out.lr.push_back(scene.lr[order[k]]);
    out.lr_masks.push_back(scene.lr_masks[order[k]]);
  }
  return out;
}

Image bicubic_baseline(const Scene& scene, std::size_t r) {
  if (scene.size() == 0) throw DataError("scene " + scene.id + " has no images");
  const std::size_t ref = clearest_order(scene.lr_masks).front();
  return bicubic_upsample(fill_masked(scene.lr[ref], scene.lr_masks[ref]), r);
}

Image reliable_mean(const std::vector<Image>& images, const std::vector<Mask>& masks) {
  if (images.empty() || images.size() != masks.size()) throw std::invalid_argument("reliable_mean needs matching stacks");
  Image out(images[0].height, images[0].width);
  out.band = images[0].band;
  for (std::size_t p = 0; p < out.size(); ++p) {
    double sum = 0.0, all = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      all += images[i].pixels[p];
      if (masks[i].bits[p]) {
        sum += images[i].pixels[p];
        ++n;
      }
    }
    out.pixels[p] = n > 0 ? sum / double(n) : all / double(images.size());
  }
  return out;
}

Image bicubic_mean(const Scene& scene, std::size_t r, int bound) {
  if (scene.size() == 0) throw DataError("scene " + scene.id + " has no images");
  const RegisteredStack reg = prepare_ilr(scene, r, bound);
  return reliable_mean(reg.images, reg.masks);
}

ForwardModel estimate_forward_model(const Scene& scene, std::size_t r, int bound, double blur_sigma) {
  if (scene.size() == 0) throw DataError("scene " + scene.id + " has no images");
  return ForwardModel::gaussian(blur_sigma, r, prepare_ilr(scene, r, bound).shifts);
}

double data_fidelity_mse(const Scene& scene, const ForwardModel& model, const Image& hr) {
  check_scene(scene, model);
  const std::size_t n = clear_total(scene);
  if (n == 0) throw DataError("scene " + scene.id + " has no clear LR pixels");
  double s = 0.0;
  for (const Image& e : masked_residuals(scene, model, hr)) {
    for (double v : e.pixels) s += v * v;
  }
  return s / double(n);
}

SolverResult ibp(const Scene& scene, const ForwardModel& model, const Image& init, const IbpConfig& cfg) {
  SolverResult result{init, {data_fidelity_mse(scene, model, init)}, false};
  if (cfg.iterations == 0) return result;
  const double inv_clear = 1.0 / double(clear_total(scene));
  auto back_projection = [&](const Image& x) {
    Image g(x.height, x.width);
    const auto residuals = masked_residuals(scene, model, x);
    for (std::size_t i = 0; i < scene.size(); ++i) axpy(inv_clear, model.back_project(residuals[i], i), g);
    return g;
  };
  auto dot = [](const Image& a, const Image& b) {
    double s = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) s += a.pixels[p] * b.pixels[p];
    return s;
  };

  Guard guard{result, result.objective.front()};
  Image x = init;
  if (!cfg.conjugate) {
    const double lambda = largest_eigenvalue(scene, model, init.height, init.width, inv_clear);
    if (!(lambda > 0.0)) return result;
    const double step = cfg.step / lambda;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      axpy(-step, back_projection(x), x);
      if (!guard.accept(x, data_fidelity_mse(scene, model, x))) break;
    }
    return result;
  }

  // Back-projections combined into conjugate directions, each taken with the
  // exact minimizing step along it (Fletcher-Reeves).
  Image g = back_projection(x);
  Image d = g;
  double gg = dot(g, g);
  for (std::size_t it = 0; it < cfg.iterations && gg > 0.0; ++it) {
    const double curvature = dot(d, normal_operator(scene, model, d, inv_clear));
    if (!(curvature > 0.0)) break;
    axpy(-cfg.step * dot(g, d) / curvature, d, x);
    if (!guard.accept(x, data_fidelity_mse(scene, model, x))) break;
    g = back_projection(x);
    const double next = dot(g, g);
    const double beta = next / gg;
    for (std::size_t p = 0; p < d.size(); ++p) d.pixels[p] = g.pixels[p] + beta * d.pixels[p];
    gg = next;
  }
  return result;
}

double btv_regularizer(const Image& x, int radius, double alpha) {
  double total = 0.0;
  for (int l = -radius; l <= radius; ++l) {
    for (int m = -radius; m <= radius; ++m) {
      if (l == 0 && m == 0) continue;
      const Image s = apply_shift(x, {l, m});
      double sum = 0.0;
      for (std::size_t p = 0; p < x.size(); ++p) sum += std::abs(x.pixels[p] - s.pixels[p]);
      total += std::pow(alpha, std::abs(l) + std::abs(m)) * sum;
    }
  }
  return total;
}

SolverResult btv(const Scene& scene, const ForwardModel& model, const Image& init, const BtvConfig& cfg) {
  check_scene(scene, model);
  SolverResult result{init, {btv_objective(scene, model, init, cfg)}, false};
  if (cfg.iterations == 0) return result;
  const auto [lo, hi] = std::minmax_element(init.pixels.begin(), init.pixels.end());
  const double step = cfg.step * std::max(*hi - *lo, 1.0);

  Guard guard{result, result.objective.front()};
  Image x = init;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Image grad(x.height, x.width);
    auto residuals = masked_residuals(scene, model, x);
    for (std::size_t i = 0; i < scene.size(); ++i) {
      for (double& v : residuals[i].pixels) v = sign(v);
      axpy(1.0, model.back_project(residuals[i], i), grad);
    }
    for (int l = -cfg.radius; l <= cfg.radius; ++l) {
      for (int m = -cfg.radius; m <= cfg.radius; ++m) {
        if (l == 0 && m == 0) continue;
        const Image s = apply_shift(x, {l, m});
        Image d(x.height, x.width);
        for (std::size_t p = 0; p < x.size(); ++p) d.pixels[p] = sign(x.pixels[p] - s.pixels[p]);
        const double wgt = cfg.reg_weight * std::pow(cfg.alpha, std::abs(l) + std::abs(m));
        axpy(wgt, d, grad);
        axpy(-wgt, shift_adjoint(d, {l, m}), grad);
      }
    }
    axpy(-step, grad, x);
    if (!guard.accept(x, btv_objective(scene, model, x, cfg))) break;
  }
  if (!result.stopped_early) result.image = x;
  return result;
}

Image sisr_and_mean(const Scene& scene, const ModelParams& params, int bound, std::size_t max_images) {
  if (scene.size() == 0) throw DataError("scene " + scene.id + " has no images");
  const std::size_t r = params.config().r;
  const Scene sub = clearest_subset(scene, max_images);
  const RegisteredStack reg = prepare_ilr(sub, r, bound);
  std::vector<Image> ilr;
  for (std::size_t i = 0; i < sub.size(); ++i) ilr.push_back(bicubic_upsample(fill_masked(sub.lr[i], sub.lr_masks[i]), r));
  NoGradGuard no_grad;
  const Tensor stack = stack_to_tensor(ilr);
  const Tensor sr = sisr_project(sisrnet_forward(stack, params), stack, params);
  std::vector<Image> aligned;
  for (std::size_t i = 0; i < sub.size(); ++i) aligned.push_back(apply_shift(tensor_to_image(sr, i), -reg.shifts[i]));
  return reliable_mean(aligned, reg.masks);
}

}  // namespace deepsum
