#pragma once

// Differentiable operations on Tensor. Layout convention is channels-last:
// images are [B, H, W, C] and volumes [B, D, H, W, C].

#include <cstddef>
#include <vector>

#include "deepsum/tensor.hpp"

namespace deepsum {

enum class Padding { Reflect, Valid };

/// Mirror index without repeating the edge sample: -1 -> 1, n -> n-2.
/// Requires -n < i < 2n-1.
inline std::size_t reflect_index(long i, long n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return static_cast<std::size_t>(i);
}

// Cross-correlation (no kernel flip). kernel is [kh, kw, Cin, Cout]; bias,
// when defined, is [Cout]. Reflect padding keeps H and W and needs odd
// kernel sides; valid padding yields H-kh+1 x W-kw+1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Padding padding);
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding);

// Temporal axis is unpadded with the given stride; spatial axes use reflect
// padding. kernel is [kd, kh, kw, Cin, Cout].
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t temporal_stride);
inline Tensor conv3d(const Tensor& input, const Tensor& kernel, std::size_t temporal_stride) {
  return conv3d(input, kernel, Tensor{}, temporal_stride);
}

/// Per sample (axis 0) and channel (last axis), normalizes over every axis in
/// between to zero mean and unit variance. No learned affine.
Tensor instance_norm(const Tensor& input, double eps = 1e-12);

Tensor leaky_relu(const Tensor& input, double slope);
Tensor softmax(const Tensor& input, std::size_t axis);
/// Mean over the given axes; reduced axes keep extent 1.
Tensor mean(const Tensor& input, const std::vector<std::size_t>& axes);
/// Sum of all elements, shape [1].
Tensor sum(const Tensor& input);

// Numpy-style broadcasting (right-aligned; extents must match or be 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor reshape(const Tensor& input, Shape shape);
/// Rows of axis 0 selected (and possibly repeated) by index.
Tensor gather_rows(const Tensor& input, const std::vector<std::size_t>& rows);
/// Concatenation along axis 0.
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Mean negative log-likelihood of softmax(logits) for integer labels.
/// logits is [M, C]; labels has M entries in [0, C).
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

}  // namespace deepsum
