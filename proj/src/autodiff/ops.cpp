#include <algorithm>
#include <cmath>
#include <string>

#include "deepsum/kernels.hpp"
#include "deepsum/ops.hpp"

namespace deepsum {
namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_stride;
  std::vector<std::size_t> b_stride;
  bool same = false;
};

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape ap(rank - a.size(), 1), bp(rank - b.size(), 1);
  ap.insert(ap.end(), a.begin(), a.end());
  bp.insert(bp.end(), b.begin(), b.end());
  const auto as = strides_of(ap);
  const auto bs = strides_of(bp);
  p.out.resize(rank);
  p.a_stride.resize(rank);
  p.b_stride.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (ap[i] != bp[i] && ap[i] != 1 && bp[i] != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(ap[i], bp[i]);
    p.a_stride[i] = ap[i] == 1 ? 0 : as[i];
    p.b_stride[i] = bp[i] == 1 ? 0 : bs[i];
  }
  return p;
}

template <typename Fn>
void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
  const std::size_t total = numel(p.out);
  if (p.same) {
    for (std::size_t i = 0; i < total; ++i) fn(i, i, i);
    return;
  }
  const std::size_t rank = p.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ai = 0, bi = 0;
  for (std::size_t o = 0; o < total; ++o) {
    fn(o, ai, bi);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ai += p.a_stride[d];
      bi += p.b_stride[d];
      if (idx[d] < p.out[d]) break;
      ai -= p.a_stride[d] * idx[d];
      bi -= p.b_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind) {
  BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
  std::vector<double> out(numel(plan.out));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
    switch (kind) {
      case BinaryKind::Add: out[o] = av[i] + bv[j]; break;
      case BinaryKind::Sub: out[o] = av[i] - bv[j]; break;
      case BinaryKind::Mul: out[o] = av[i] * bv[j]; break;
    }
  });
  Shape shape = plan.out;
  return Tensor::make_result(std::move(shape), std::move(out), {a, b}, [plan, kind](detail::Node& self) {
    auto& an = self.parents[0];
    auto& bn = self.parents[1];
    double* ga = an->requires_grad ? an->grad_buffer().data() : nullptr;
    double* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
    const double* g = self.grad.data();
    const double* av = an->value.data();
    const double* bv = bn->value.data();
    for_each_broadcast(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (kind) {
        case BinaryKind::Add:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] += g[o];
          break;
        case BinaryKind::Sub:
          if (ga) ga[i] += g[o];
          if (gb) gb[j] -= g[o];
          break;
        case BinaryKind::Mul:
          if (ga) ga[i] += g[o] * bv[j];
          if (gb) gb[j] += g[o] * av[i];
          break;
      }
    });
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::Mul); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
    kernels::axpy(self.grad.size(), factor, self.grad.data(), self.parents[0]->grad_buffer().data());
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v += value;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    kernels::axpy(self.grad.size(), 1.0, self.grad.data(), self.parents[0]->grad_buffer().data());
  });
}

Tensor leaky_relu(const Tensor& input, double slope) {
  std::vector<double> out(input.size());
  kernels::leaky_relu(out.size(), slope, input.values().data(), out.data());
  return Tensor::make_result(input.shape(), std::move(out), {input}, [slope](detail::Node& self) {
    auto& xn = self.parents[0];
    double* gx = xn->grad_buffer().data();
    const double* x = xn->value.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += x[i] >= 0.0 ? self.grad[i] : slope * self.grad[i];
  });
}

Tensor instance_norm(const Tensor& input, double eps) {
  if (input.rank() < 3) {
    throw ShapeError("instance_norm needs [B, spatial..., C], got " + shape_str(input.shape()));
  }
  const std::size_t batch = input.dim(0);
  const std::size_t channels = input.dim(input.rank() - 1);
  const std::size_t spatial = input.size() / (batch * channels);
  if (spatial < 2) throw ShapeError("instance_norm needs spatial extent > 1, got " + shape_str(input.shape()));

  const auto x = input.values();
  std::vector<double> out(input.size());
  std::vector<double> inv_std(batch * channels);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t base = b * spatial * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      double m = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) m += x[base + s * channels + c];
      m /= static_cast<double>(spatial);
      double v = 0.0;
      for (std::size_t s = 0; s < spatial; ++s) {
        const double d = x[base + s * channels + c] - m;
        v += d * d;
      }
      v /= static_cast<double>(spatial);
      const double is = 1.0 / std::sqrt(v + eps);
      inv_std[b * channels + c] = is;
      for (std::size_t s = 0; s < spatial; ++s) {
        out[base + s * channels + c] = (x[base + s * channels + c] - m) * is;
      }
    }
  }
  return Tensor::make_result(
      input.shape(), std::move(out), {input},
      [batch, channels, spatial, inv_std = std::move(inv_std)](detail::Node& self) {
        double* gx = self.parents[0]->grad_buffer().data();
        const double* y = self.value.data();
        const double* g = self.grad.data();
        const double n = static_cast<double>(spatial);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t base = b * spatial * channels;
          for (std::size_t c = 0; c < channels; ++c) {
            double gm = 0.0, gym = 0.0;
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = base + s * channels + c;
              gm += g[i];
              gym += g[i] * y[i];
            }
            gm /= n;
            gym /= n;
            const double is = inv_std[b * channels + c];
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = base + s * channels + c;
              gx[i] += is * (g[i] - gm - y[i] * gym);
            }
          }
        }
      });
}

Tensor softmax(const Tensor& input, std::size_t axis) {
  if (axis >= input.rank()) {
    throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for " + shape_str(input.shape()));
  }
  const Shape& s = input.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const auto x = input.values();
  std::vector<double> out(input.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = x[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, x[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(x[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  return Tensor::make_result(input.shape(), std::move(out), {input}, [outer, inner, len](detail::Node& self) {
    double* gx = self.parents[0]->grad_buffer().data();
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dotv = 0.0;
        for (std::size_t k = 0; k < len; ++k) dotv += g[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          gx[i] += y[i] * (g[i] - dotv);
        }
      }
    }
  });
}

Tensor mean(const Tensor& input, const std::vector<std::size_t>& axes) {
  const Shape& s = input.shape();
  std::vector<bool> reduced(s.size(), false);
  for (std::size_t a : axes) {
    if (a >= s.size()) throw ShapeError("mean axis " + std::to_string(a) + " out of range for " + shape_str(s));
    reduced[a] = true;
  }
  Shape out_shape = s;
  std::size_t count = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (reduced[i]) {
      count *= s[i];
      out_shape[i] = 1;
    }
  }
  // Broadcast plan from output to input gives the index mapping.
  BroadcastPlan plan = plan_broadcast(s, out_shape);
  std::vector<double> out(numel(out_shape), 0.0);
  const auto x = input.values();
  for_each_broadcast(plan, [&](std::size_t, std::size_t i, std::size_t o) { out[o] += x[i]; });
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out) v *= inv;
  return Tensor::make_result(std::move(out_shape), std::move(out), {input}, [plan, inv](detail::Node& self) {
    double* gx = self.parents[0]->grad_buffer().data();
    const double* g = self.grad.data();
    for_each_broadcast(plan, [&](std::size_t, std::size_t i, std::size_t o) { gx[i] += g[o] * inv; });
  });
}

Tensor sum(const Tensor& input) {
  double total = 0.0;
  for (double v : input.values()) total += v;
  return Tensor::make_result(Shape{1}, {total}, {input}, [](detail::Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const double g = self.grad[0];
    for (double& v : gx) v += g;
  });
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (numel(shape) != input.size()) {
    throw ShapeError("cannot reshape " + shape_str(input.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(input.values().begin(), input.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {input}, [](detail::Node& self) {
    kernels::axpy(self.grad.size(), 1.0, self.grad.data(), self.parents[0]->grad_buffer().data());
  });
}

Tensor gather_rows(const Tensor& input, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ShapeError("gather_rows needs at least one index");
  const std::size_t n = input.dim(0);
  const std::size_t stride = input.size() / n;
  for (std::size_t r : rows) {
    if (r >= n) throw ShapeError("gather_rows index " + std::to_string(r) + " out of range " + std::to_string(n));
  }
  Shape shape = input.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * stride);
  const auto x = input.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.data() + rows[i] * stride, stride, out.data() + i * stride);
  }
  return Tensor::make_result(std::move(shape), std::move(out), {input}, [rows, stride](detail::Node& self) {
    double* gx = self.parents[0]->grad_buffer().data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      kernels::axpy(stride, 1.0, self.grad.data() + i * stride, gx + rows[i] * stride);
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one tensor");
  Shape shape = parts[0].shape();
  std::size_t rows = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), t.shape().begin() + 1)) {
      throw ShapeError("concat_rows shape mismatch: " + shape_str(shape) + " vs " + shape_str(t.shape()));
    }
    rows += t.dim(0);
  }
  shape[0] = rows;
  std::vector<double> out;
  out.reserve(numel(shape));
  std::vector<std::size_t> sizes;
  for (const Tensor& t : parts) {
    out.insert(out.end(), t.values().begin(), t.values().end());
    sizes.push_back(t.size());
  }
  return Tensor::make_result(std::move(shape), std::move(out), parts, [sizes](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      auto& pn = self.parents[i];
      if (pn->requires_grad) kernels::axpy(sizes[i], 1.0, self.grad.data() + offset, pn->grad_buffer().data());
      offset += sizes[i];
    }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy logits must be [M,C]");
  const std::size_t m = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (labels.size() != m) throw ShapeError("softmax_cross_entropy label count mismatch");
  const auto x = logits.values();
  std::vector<double> probs(m * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= c) throw ShapeError("label out of range");
    const double* row = x.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      probs[i * c + k] = std::exp(row[k] - mx);
      total += probs[i * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) probs[i * c + k] /= total;
    loss += (mx + std::log(total)) - row[labels[i]];
  }
  loss /= static_cast<double>(m);
  return Tensor::make_result(Shape{1}, {loss}, {logits},
                             [probs = std::move(probs), labels, m, c](detail::Node& self) {
                               double* gx = self.parents[0]->grad_buffer().data();
                               const double g = self.grad[0] / static_cast<double>(m);
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t k = 0; k < c; ++k) {
                                   const double target = k == labels[i] ? 1.0 : 0.0;
                                   gx[i * c + k] += g * (probs[i * c + k] - target);
                                 }
                               }
                             });
}

}  // namespace deepsum
