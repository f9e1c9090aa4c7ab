#include <algorithm>
#include <string>

#include "deepsum/kernels.hpp"
#include "deepsum/ops.hpp"

namespace deepsum {
namespace {

// One description covers 2D (depth 1, kd 1) and 3D convolutions.
struct ConvGeometry {
  std::size_t batch, depth, height, width, cin;
  std::size_t kd, kh, kw, cout;
  std::size_t stride;  // temporal
  std::size_t out_depth, out_height, out_width;
  long pad_h, pad_w;
  bool reflect;

  std::size_t rows() const { return batch * out_depth * out_height * out_width; }
  std::size_t patch() const { return kd * kh * kw * cin; }
};

// Cap on im2col scratch (doubles) so large images are processed in row chunks.
constexpr std::size_t kColBudget = std::size_t{1} << 21;

std::size_t chunk_rows(const ConvGeometry& g) {
  return std::max<std::size_t>(1, std::min(g.rows(), kColBudget / std::max<std::size_t>(1, g.patch())));
}

// Source offset of input element (b, z, y, x, 0).
inline std::size_t src_offset(const ConvGeometry& g, std::size_t b, std::size_t z, std::size_t y, std::size_t x) {
  return (((b * g.depth + z) * g.height + y) * g.width + x) * g.cin;
}

template <typename Fn>
void for_each_tap(const ConvGeometry& g, std::size_t row, Fn&& fn) {
  std::size_t r = row;
  const std::size_t ox = r % g.out_width;
  r /= g.out_width;
  const std::size_t oy = r % g.out_height;
  r /= g.out_height;
  const std::size_t t = r % g.out_depth;
  const std::size_t b = r / g.out_depth;
  std::size_t col = 0;
  for (std::size_t dt = 0; dt < g.kd; ++dt) {
    const std::size_t z = t * g.stride + dt;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const long sy = static_cast<long>(oy + ky) - g.pad_h;
      const std::size_t iy = g.reflect ? reflect_index(sy, static_cast<long>(g.height)) : static_cast<std::size_t>(sy);
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const long sx = static_cast<long>(ox + kx) - g.pad_w;
        const std::size_t ix =
            g.reflect ? reflect_index(sx, static_cast<long>(g.width)) : static_cast<std::size_t>(sx);
        fn(col, src_offset(g, b, z, iy, ix));
        col += g.cin;
      }
    }
  }
}

void im2col(const ConvGeometry& g, const double* x, std::size_t row0, std::size_t nrows, double* cols) {
  const std::size_t p = g.patch();
  for (std::size_t r = 0; r < nrows; ++r) {
    double* dst = cols + r * p;
    for_each_tap(g, row0 + r, [&](std::size_t col, std::size_t src) {
      std::copy_n(x + src, g.cin, dst + col);
    });
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, std::size_t row0, std::size_t nrows, double* dx) {
  const std::size_t p = g.patch();
  for (std::size_t r = 0; r < nrows; ++r) {
    const double* src = cols + r * p;
    for_each_tap(g, row0 + r, [&](std::size_t col, std::size_t dst) {
      double* d = dx + dst;
      const double* s = src + col;
      for (std::size_t c = 0; c < g.cin; ++c) d[c] += s[c];
    });
  }
}

std::vector<double> conv_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias) {
  std::vector<double> out(g.rows() * g.cout);
  const std::size_t p = g.patch();
  const std::size_t chunk = chunk_rows(g);
  std::vector<double> cols(chunk * p);
  for (std::size_t row0 = 0; row0 < g.rows(); row0 += chunk) {
    const std::size_t n = std::min(chunk, g.rows() - row0);
    double* y = out.data() + row0 * g.cout;
    im2col(g, x, row0, n, cols.data());
    if (bias) {
      for (std::size_t r = 0; r < n; ++r) std::copy_n(bias, g.cout, y + r * g.cout);
    }
    kernels::gemm(kernels::Trans::No, kernels::Trans::No, n, g.cout, p, 1.0, cols.data(), p, w, g.cout,
                  bias ? 1.0 : 0.0, y, g.cout);
  }
  return out;
}

void conv_backward(const ConvGeometry& g, const double* x, const double* w, const double* dy, double* dx,
                   double* dw, double* dbias) {
  const std::size_t p = g.patch();
  const std::size_t chunk = chunk_rows(g);
  std::vector<double> cols(chunk * p);
  for (std::size_t row0 = 0; row0 < g.rows(); row0 += chunk) {
    const std::size_t n = std::min(chunk, g.rows() - row0);
    const double* dyc = dy + row0 * g.cout;
    if (dw) {
      im2col(g, x, row0, n, cols.data());
      kernels::gemm(kernels::Trans::Yes, kernels::Trans::No, p, g.cout, n, 1.0, cols.data(), p, dyc, g.cout, 1.0,
                    dw, g.cout);
    }
    if (dx) {
      kernels::gemm(kernels::Trans::No, kernels::Trans::Yes, n, p, g.cout, 1.0, dyc, g.cout, w, g.cout, 0.0,
                    cols.data(), p);
      col2im_add(g, cols.data(), row0, n, dx);
    }
    if (dbias) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < g.cout; ++c) dbias[c] += dyc[r * g.cout + c];
      }
    }
  }
}

Tensor conv_op(const Tensor& input, const Tensor& kernel, const Tensor& bias, ConvGeometry g, Shape out_shape) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw ShapeError("conv bias must be [" + std::to_string(g.cout) + "], got " + shape_str(bias.shape()));
  }
  std::vector<double> out =
      conv_forward(g, input.values().data(), kernel.values().data(), bias.defined() ? bias.values().data() : nullptr);
  return Tensor::make_result(std::move(out_shape), std::move(out), {input, kernel, bias}, [g](detail::Node& self) {
    auto& xn = self.parents[0];
    auto& wn = self.parents[1];
    auto& bn = self.parents[2];
    double* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
    double* dw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
    double* db = (bn && bn->requires_grad) ? bn->grad_buffer().data() : nullptr;
    conv_backward(g, xn->value.data(), wn->value.data(), self.grad.data(), dx, dw, db);
  });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding) {
  return conv2d(input, kernel, Tensor{}, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding) {
  if (input.rank() != 4) throw ShapeError("conv2d input must be [B,H,W,C], got " + shape_str(input.shape()));
  if (kernel.rank() != 4) throw ShapeError("conv2d kernel must be [kh,kw,Cin,Cout], got " + shape_str(kernel.shape()));
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.depth = 1;
  g.height = input.dim(1);
  g.width = input.dim(2);
  g.cin = input.dim(3);
  g.kd = 1;
  g.kh = kernel.dim(0);
  g.kw = kernel.dim(1);
  g.cout = kernel.dim(3);
  g.stride = 1;
  g.out_depth = 1;
  if (kernel.dim(2) != g.cin) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) + " kernel " +
                     shape_str(kernel.shape()));
  }
  if (padding == Padding::Reflect) {
    if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ShapeError("reflect padding needs odd kernel sides");
    g.reflect = true;
    g.pad_h = static_cast<long>(g.kh / 2);
    g.pad_w = static_cast<long>(g.kw / 2);
    if (static_cast<long>(g.height) <= g.pad_h || static_cast<long>(g.width) <= g.pad_w) {
      throw ShapeError("input " + shape_str(input.shape()) + " too small to reflect-pad kernel " +
                       shape_str(kernel.shape()));
    }
    g.out_height = g.height;
    g.out_width = g.width;
  } else {
    if (g.kh > g.height || g.kw > g.width) {
      throw ShapeError("kernel " + shape_str(kernel.shape()) + " larger than input " + shape_str(input.shape()));
    }
    g.reflect = false;
    g.pad_h = g.pad_w = 0;
    g.out_height = g.height - g.kh + 1;
    g.out_width = g.width - g.kw + 1;
  }
  return conv_op(input, kernel, bias, g, Shape{g.batch, g.out_height, g.out_width, g.cout});
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t temporal_stride) {
  if (input.rank() != 5) throw ShapeError("conv3d input must be [B,D,H,W,C], got " + shape_str(input.shape()));
  if (kernel.rank() != 5) {
    throw ShapeError("conv3d kernel must be [kd,kh,kw,Cin,Cout], got " + shape_str(kernel.shape()));
  }
  if (temporal_stride == 0) throw ShapeError("conv3d temporal stride must be positive");
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.depth = input.dim(1);
  g.height = input.dim(2);
  g.width = input.dim(3);
  g.cin = input.dim(4);
  g.kd = kernel.dim(0);
  g.kh = kernel.dim(1);
  g.kw = kernel.dim(2);
  g.cout = kernel.dim(4);
  g.stride = temporal_stride;
  if (kernel.dim(3) != g.cin) {
    throw ShapeError("conv3d channel mismatch: input " + shape_str(input.shape()) + " kernel " +
                     shape_str(kernel.shape()));
  }
  if (g.depth < g.kd || (g.depth - g.kd) % g.stride != 0) {
    throw ShapeError("conv3d depth " + std::to_string(g.depth) + " incompatible with temporal kernel " +
                     std::to_string(g.kd) + " and stride " + std::to_string(g.stride));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ShapeError("reflect padding needs odd kernel sides");
  g.reflect = true;
  g.pad_h = static_cast<long>(g.kh / 2);
  g.pad_w = static_cast<long>(g.kw / 2);
  if (static_cast<long>(g.height) <= g.pad_h || static_cast<long>(g.width) <= g.pad_w) {
    throw ShapeError("input " + shape_str(input.shape()) + " too small to reflect-pad kernel " +
                     shape_str(kernel.shape()));
  }
  g.out_depth = (g.depth - g.kd) / g.stride + 1;
  g.out_height = g.height;
  g.out_width = g.width;
  return conv_op(input, kernel, bias, g, Shape{g.batch, g.out_depth, g.out_height, g.out_width, g.cout});
}

}  // namespace deepsum
