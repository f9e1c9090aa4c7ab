#include "deepsum/model.hpp"

#include <algorithm>
#include <cmath>

#include "deepsum/errors.hpp"
#include "deepsum/ops.hpp"

namespace deepsum {
namespace {

Tensor conv_block(const Tensor& x, const ModelParams& p, const std::string& name) {
  return conv2d(x, p.at(name + "/kernel"), Padding::Reflect);
}

Tensor conv_bias(const Tensor& x, const ModelParams& p, const std::string& name) {
  return conv2d(x, p.at(name + "/kernel"), p.at(name + "/bias"), Padding::Reflect);
}

long round_half_toward_zero(double v) {
  const double mag = std::ceil(std::abs(v) - 0.5);
  return static_cast<long>(v < 0 ? -mag : mag);
}

void check_stack(const Tensor& stack, const ModelConfig& cfg) {
  if (stack.rank() != 4 || stack.dim(3) != 1) {
    throw ShapeError("input stack must be [N,H,W,1], got " + shape_str(stack.shape()));
  }
  if (stack.dim(0) != cfg.n_images) {
    throw ShapeError("model expects " + std::to_string(cfg.n_images) + " images, got stack " +
                     shape_str(stack.shape()));
  }
}

}  // namespace

Tensor stack_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw ShapeError("empty image stack");
  const std::size_t h = images[0].height, w = images[0].width;
  std::vector<double> v;
  v.reserve(images.size() * h * w);
  for (const Image& img : images) {
    if (img.height != h || img.width != w) throw ShapeError("stack images differ in size");
    v.insert(v.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor(Shape{images.size(), h, w, 1}, std::move(v));
}

Image tensor_to_image(const Tensor& t, std::size_t item) {
  if (t.rank() != 4 || t.dim(3) != 1 || item >= t.dim(0)) {
    throw ShapeError("expected [B,H,W,1] tensor, got " + shape_str(t.shape()));
  }
  Image img(t.dim(1), t.dim(2));
  const auto v = t.values();
  std::copy_n(v.begin() + static_cast<long>(item * img.size()), img.size(), img.pixels.begin());
  return img;
}

Tensor sisrnet_forward(const Tensor& ilr_stack, const ModelParams& params) {
  const ModelConfig& cfg = params.config();
  Tensor x = ilr_stack;
  for (std::size_t l = 0; l < cfg.sisr_layers; ++l) {
    x = leaky_relu(instance_norm(conv_block(x, params, "sisr/conv" + std::to_string(l))), cfg.leaky_slope);
  }
  return x;
}

Tensor sisr_project(const Tensor& features, const Tensor& ilr_stack, const ModelParams& params) {
  return add(ilr_stack, scale(conv_bias(features, params, "sisr/proj"), params.residual_std()));
}

Tensor regnet_logits(const Tensor& features, const ModelParams& params) {
  const ModelConfig& cfg = params.config();
  if (features.rank() != 4) throw ShapeError("features must be [N,H,W,F], got " + shape_str(features.shape()));
  const std::size_t n = features.dim(0), h = features.dim(1), w = features.dim(2), f = features.dim(3);
  if (n < 2) throw ShapeError("RegNet needs a reference and at least one moving item");
  std::vector<std::size_t> pairs;
  for (std::size_t i = 1; i < n; ++i) {
    pairs.push_back(0);
    pairs.push_back(i);
  }
  Tensor x = reshape(gather_rows(features, pairs), Shape{1, 2 * (n - 1), h, w, f});
  x = leaky_relu(conv3d(x, params.at("regnet/pair/kernel"), params.at("regnet/pair/bias"), 2), cfg.leaky_slope);
  x = reshape(x, Shape{n - 1, h, w, cfg.regnet_first_channels});
  for (std::size_t l = 0; l < cfg.regnet_2d_layers; ++l) {
    x = leaky_relu(conv_bias(x, params, "regnet/conv" + std::to_string(l)), cfg.leaky_slope);
  }
  x = mean(conv_bias(x, params, "regnet/out"), {1, 2});
  return reshape(x, Shape{n - 1, cfg.classes()});
}

RegistrationFilterBank regnet_forward(const Tensor& features, const ModelParams& params) {
  const ModelConfig& cfg = params.config();
  const Tensor logits = regnet_logits(features, params);
  RegistrationFilterBank bank;
  bank.filters = reshape(softmax(logits, 1), Shape{logits.dim(0), cfg.filter_size, cfg.filter_size});
  bank.integer_shifts = extract_shifts(bank.filters, cfg.mask_shift_rule);
  return bank;
}

Tensor gdc_apply(const Tensor& stack, const Tensor& filters) {
  if (stack.rank() != 4) throw ShapeError("GDC input must be [N,H,W,C], got " + shape_str(stack.shape()));
  if (filters.rank() != 3 || filters.dim(1) != filters.dim(2) || filters.dim(1) % 2 == 0) {
    throw ShapeError("GDC filters must be [N-1,K,K] with K odd, got " + shape_str(filters.shape()));
  }
  const std::size_t n = stack.dim(0), h = stack.dim(1), w = stack.dim(2), c = stack.dim(3);
  const std::size_t k = filters.dim(1);
  if (filters.dim(0) != n - 1) {
    throw ShapeError("GDC needs " + std::to_string(n - 1) + " filters for stack " + shape_str(stack.shape()) +
                     ", got " + shape_str(filters.shape()));
  }
  const long half = static_cast<long>(k / 2);
  if (static_cast<long>(h) <= half || static_cast<long>(w) <= half) {
    throw ShapeError("stack " + shape_str(stack.shape()) + " too small for " + std::to_string(k) + "x" +
                     std::to_string(k) + " filters");
  }
  const std::size_t item = h * w * c;
  const auto x = stack.values();
  const auto g = filters.values();
  std::vector<double> out(x.begin(), x.end());
  // out_i(y, x) = sum_{a,b} G[a+half, b+half] * in_i(reflect(y-a), reflect(x-b))
  auto for_taps = [h, w, c, k, half](std::size_t i, auto&& fn) {
    for (long a = -half; a <= half; ++a) {
      for (long b = -half; b <= half; ++b) {
        const std::size_t tap = (i - 1) * k * k + static_cast<std::size_t>((a + half) * static_cast<long>(k) + b + half);
        for (long y = 0; y < static_cast<long>(h); ++y) {
          const std::size_t sy = reflect_index(y - a, static_cast<long>(h));
          for (long xx = 0; xx < static_cast<long>(w); ++xx) {
            const std::size_t sx = reflect_index(xx - b, static_cast<long>(w));
            fn(tap, (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xx)) * c, (sy * w + sx) * c);
          }
        }
      }
    }
  };
  for (std::size_t i = 1; i < n; ++i) {
    double* o = out.data() + i * item;
    std::fill(o, o + item, 0.0);
    const double* in = x.data() + i * item;
    for_taps(i, [&](std::size_t tap, std::size_t dst, std::size_t src) {
      const double wt = g[tap];
      for (std::size_t ch = 0; ch < c; ++ch) o[dst + ch] += wt * in[src + ch];
    });
  }
  return Tensor::make_result(stack.shape(), std::move(out), {stack, filters},
                             [n, c, item, for_taps](detail::Node& self) {
                               auto& xn = self.parents[0];
                               auto& gn = self.parents[1];
                               const double* dy = self.grad.data();
                               if (xn->requires_grad) {
                                 double* dx = xn->grad_buffer().data();
                                 for (std::size_t j = 0; j < item; ++j) dx[j] += dy[j];
                               }
                               for (std::size_t i = 1; i < n; ++i) {
                                 const double* dyi = dy + i * item;
                                 const double* xi = xn->value.data() + i * item;
                                 double* dxi = xn->requires_grad ? xn->grad_buffer().data() + i * item : nullptr;
                                 double* dg = gn->requires_grad ? gn->grad_buffer().data() : nullptr;
                                 const double* gv = gn->value.data();
                                 for_taps(i, [&](std::size_t tap, std::size_t dst, std::size_t src) {
                                   if (dxi) {
                                     const double wt = gv[tap];
                                     for (std::size_t ch = 0; ch < c; ++ch) dxi[src + ch] += wt * dyi[dst + ch];
                                   }
                                   if (dg) {
                                     double acc = 0.0;
                                     for (std::size_t ch = 0; ch < c; ++ch) acc += dyi[dst + ch] * xi[src + ch];
                                     dg[tap] += acc;
                                   }
                                 });
                               }
                             });
}

Shift extract_shift(std::span<const double> filter, std::size_t k, MaskShiftRule rule) {
  if (filter.size() != k * k || k % 2 == 0) throw ShapeError("filter must be K x K with K odd");
  const long half = static_cast<long>(k / 2);
  if (rule == MaskShiftRule::Argmax) {
    const auto it = std::max_element(filter.begin(), filter.end());
    const long idx = static_cast<long>(it - filter.begin());
    return {static_cast<int>(idx / static_cast<long>(k) - half), static_cast<int>(idx % static_cast<long>(k) - half)};
  }
  double total = 0.0, cy = 0.0, cx = 0.0;
  for (std::size_t i = 0; i < k * k; ++i) {
    const double v = filter[i];
    total += v;
    cy += v * static_cast<double>(static_cast<long>(i / k) - half);
    cx += v * static_cast<double>(static_cast<long>(i % k) - half);
  }
  if (!(total > 0.0)) return {};
  return {static_cast<int>(round_half_toward_zero(cy / total)), static_cast<int>(round_half_toward_zero(cx / total))};
}

std::vector<Shift> extract_shifts(const Tensor& filters, MaskShiftRule rule) {
  const std::size_t k = filters.dim(1), kk = k * k;
  std::vector<Shift> out;
  for (std::size_t i = 0; i < filters.dim(0); ++i) out.push_back(extract_shift(filters.values().subspan(i * kk, kk), k, rule));
  return out;
}

std::size_t shift_class(Shift s, std::size_t k) {
  const int half = static_cast<int>(k / 2);
  if (std::abs(s.dy) > half || std::abs(s.dx) > half) throw std::invalid_argument("shift outside the filter support");
  return static_cast<std::size_t>((s.dy + half) * static_cast<int>(k) + (s.dx + half));
}

Shift class_shift(std::size_t cls, std::size_t k) {
  const int half = static_cast<int>(k / 2);
  return {static_cast<int>(cls / k) - half, static_cast<int>(cls % k) - half};
}

Tensor delta_filters(const std::vector<Shift>& shifts, std::size_t k) {
  std::vector<double> v(shifts.size() * k * k, 0.0);
  for (std::size_t i = 0; i < shifts.size(); ++i) v[i * k * k + shift_class(shifts[i], k)] = 1.0;
  return Tensor(Shape{shifts.size(), k, k}, std::move(v));
}

Tensor mutual_inpaint(const Tensor& stack, const std::vector<Mask>& masks) {
  if (stack.rank() != 4) throw ShapeError("inpainting input must be [N,H,W,C], got " + shape_str(stack.shape()));
  const std::size_t n = stack.dim(0), h = stack.dim(1), w = stack.dim(2), c = stack.dim(3);
  if (masks.size() != n) throw ShapeError("need one mask per stack item");
  for (const Mask& m : masks) {
    if (m.height != h || m.width != w) throw ShapeError("mask size does not match stack " + shape_str(stack.shape()));
  }
  const std::size_t pixels = h * w, item = pixels * c;
  // donors[p] lists items reliable at pixel p.
  std::vector<std::vector<std::uint8_t>> reliable(n);
  for (std::size_t i = 0; i < n; ++i) reliable[i] = masks[i].bits;
  const auto x = stack.values();
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t p = 0; p < pixels; ++p) {
    std::size_t donors = 0;
    for (std::size_t i = 0; i < n; ++i) donors += reliable[i][p] ? 1 : 0;
    if (donors == 0 || donors == n) continue;
    const double inv = 1.0 / static_cast<double>(donors);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (reliable[j][p]) acc += x[j * item + p * c + ch];
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!reliable[i][p]) out[i * item + p * c + ch] = acc * inv;
      }
    }
  }
  return Tensor::make_result(stack.shape(), std::move(out), {stack},
                             [n, c, pixels, item, reliable = std::move(reliable)](detail::Node& self) {
                               double* dx = self.parents[0]->grad_buffer().data();
                               const double* dy = self.grad.data();
                               for (std::size_t p = 0; p < pixels; ++p) {
                                 std::size_t donors = 0;
                                 for (std::size_t i = 0; i < n; ++i) donors += reliable[i][p] ? 1 : 0;
                                 if (donors == 0 || donors == n) {
                                   for (std::size_t i = 0; i < n; ++i) {
                                     for (std::size_t ch = 0; ch < c; ++ch) dx[i * item + p * c + ch] += dy[i * item + p * c + ch];
                                   }
                                   continue;
                                 }
                                 const double inv = 1.0 / static_cast<double>(donors);
                                 for (std::size_t ch = 0; ch < c; ++ch) {
                                   double spread = 0.0;
                                   for (std::size_t i = 0; i < n; ++i) {
                                     if (!reliable[i][p]) spread += dy[i * item + p * c + ch];
                                   }
                                   spread *= inv;
                                   for (std::size_t j = 0; j < n; ++j) {
                                     if (reliable[j][p]) dx[j * item + p * c + ch] += dy[j * item + p * c + ch] + spread;
                                   }
                                 }
                               }
                             });
}

Tensor fusionnet_forward(const Tensor& features, const ModelParams& params) {
  const ModelConfig& cfg = params.config();
  if (features.rank() != 4) throw ShapeError("features must be [N,H,W,F], got " + shape_str(features.shape()));
  const std::size_t n = features.dim(0), h = features.dim(1), w = features.dim(2), f = features.dim(3);
  if (n != cfg.n_images) {
    throw ShapeError("FusionNet configured for " + std::to_string(cfg.n_images) + " slices, got " + std::to_string(n));
  }
  Tensor x = reshape(features, Shape{1, n, h, w, f});
  for (std::size_t l = 0; l < cfg.fusion_layers; ++l) {
    x = leaky_relu(instance_norm(conv3d(x, params.at("fusion/conv" + std::to_string(l) + "/kernel"), 1)),
                   cfg.leaky_slope);
  }
  x = reshape(x, Shape{1, h, w, f});
  return conv_bias(x, params, "fusion/out");
}

namespace {

ForwardResult fuse(const Tensor& stack, const Tensor& features, const std::vector<Mask>& masks,
                   const ModelParams& params, RegistrationFilterBank bank) {
  const ModelConfig& cfg = params.config();
  ForwardResult r;
  r.aligned_masks.push_back(masks[0]);
  for (std::size_t i = 1; i < masks.size(); ++i) {
    const Shift s = bank.integer_shifts[i - 1];
    r.aligned_masks.push_back(shift_mask(masks[i], s.dy, s.dx, cfg.max_shift()));
  }
  const Tensor z = mutual_inpaint(gdc_apply(features, bank.filters), r.aligned_masks);
  r.residual = fusionnet_forward(z, params);
  r.average = mean(mutual_inpaint(gdc_apply(stack, bank.filters), r.aligned_masks), {0});
  r.sr = add(r.average, scale(r.residual, params.residual_std()));
  r.bank = std::move(bank);
  return r;
}

}  // namespace

ForwardResult deepsum_forward(const Tensor& stack, const std::vector<Mask>& masks, const ModelParams& params) {
  check_stack(stack, params.config());
  if (masks.size() != stack.dim(0)) throw ShapeError("need one mask per input image");
  const Tensor features = sisrnet_forward(stack, params);
  RegistrationFilterBank bank = regnet_forward(features, params);
  return fuse(stack, features, masks, params, std::move(bank));
}

ForwardResult deepsum_forward_fixed(const Tensor& stack, const std::vector<Mask>& masks, const ModelParams& params,
                                    const std::vector<Shift>& shifts) {
  check_stack(stack, params.config());
  if (masks.size() != stack.dim(0)) throw ShapeError("need one mask per input image");
  if (shifts.size() + 1 != stack.dim(0)) throw ShapeError("need one shift per moving image");
  RegistrationFilterBank bank;
  bank.filters = delta_filters(shifts, params.config().filter_size);
  bank.integer_shifts = shifts;
  return fuse(stack, sisrnet_forward(stack, params), masks, params, std::move(bank));
}

}  // namespace deepsum
