#pragma once

// The DeepSUM network: SISRNet features, RegNet dynamic registration
// filters applied by global dynamic convolution (GDC), mutual inpainting,
// FusionNet slow fusion, and a residual head over the averaged registered
// inputs.
//
// Tensors are channels-last. An input stack is [N, H, W, 1] on the HR grid
// (bicubic-upsampled, classically pre-registered, reference at index 0).
//
// GDC orientation: a filter whose mass is a delta at offset (p, q) from its
// center reproduces apply_shift(image, {p, q}) on the interior, i.e. moves
// content by (p, q). For a moving image displaced by t from the reference,
// the aligning filter is therefore the delta at -t.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepsum/checkpoint.hpp"
#include "deepsum/imaging.hpp"
#include "deepsum/registration.hpp"
#include "deepsum/tensor.hpp"

namespace deepsum {

enum class MaskShiftRule { Centroid, Argmax };

struct ModelConfig {
  std::size_t n_images = 9;
  std::size_t r = 3;
  std::size_t features = 64;
  std::size_t regnet_first_channels = 128;
  std::size_t filter_size = 7;  // K
  std::size_t sisr_layers = 8;
  std::size_t regnet_2d_layers = 3;
  std::size_t fusion_layers = 4;
  std::size_t temporal_kernel = 3;
  std::size_t conv_kernel = 3;
  double leaky_slope = 0.2;
  double residual_mean = 0.0;
  double residual_std = 1.0;
  MaskShiftRule mask_shift_rule = MaskShiftRule::Centroid;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  int max_shift() const { return static_cast<int>(filter_size / 2); }
  std::size_t classes() const { return filter_size * filter_size; }
};

/// Named tensors for all three subnetworks plus the SISR projection used in
/// pretraining. Paths: "sisr/...", "regnet/...", "fusion/...". Residual
/// statistics and shape metadata live under "stats/" and "meta/" and are
/// never trained.
class ModelParams {
 public:
  ModelParams() = default;
  /// Glorot-uniform kernels, zero biases, from a seeded generator.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  /// Rebuilds from a checkpoint; throws ConfigError naming the offending
  /// tensor and shapes if it does not fit config.
  static ModelParams from_checkpoint(const ModelConfig& config, const ParameterSet& saved);

  const ModelConfig& config() const { return config_; }
  const ParameterSet& tensors() const { return tensors_; }
  ParameterSet& tensors() { return tensors_; }
  const Tensor& at(const std::string& name) const { return tensors_.at(name); }

  /// Trainable tensors whose path starts with prefix ("" = all).
  std::vector<Tensor> trainable(const std::string& prefix = "") const;

  double residual_mean() const;
  double residual_std() const;
  /// Stores the statistics and resets the head biases to mean/std so that a
  /// zero residual branch still yields the mean correction.
  void set_residual_stats(double mean, double std);

  /// Copies every tensor under prefix from other (shapes must match).
  void copy_from(const ModelParams& other, const std::string& prefix);

 private:
  ModelConfig config_;
  ParameterSet tensors_;
};

struct RegistrationFilterBank {
  Tensor filters;                   // [N-1, K, K], each nonnegative, unit sum
  std::vector<Shift> integer_shifts;  // derived from filters
};

Tensor stack_to_tensor(const std::vector<Image>& images);
/// First item of a [B, H, W, 1] tensor as an image.
Image tensor_to_image(const Tensor& t, std::size_t item = 0);

Tensor sisrnet_forward(const Tensor& ilr_stack, const ModelParams& params);
/// Single-image SR output per item: ilr + std * projection(features).
Tensor sisr_project(const Tensor& features, const Tensor& ilr_stack, const ModelParams& params);

/// Pre-softmax scores [N-1, K*K], row-major over the K x K filter.
Tensor regnet_logits(const Tensor& features, const ModelParams& params);
RegistrationFilterBank regnet_forward(const Tensor& features, const ModelParams& params);

/// Item 0 passes through; item i >= 1 is filtered by filters[i-1], shared
/// across channels, with reflect padding.
Tensor gdc_apply(const Tensor& stack, const Tensor& filters);

/// Centroid (or argmax) of a K x K filter relative to its center, each
/// component rounded to nearest with ties toward zero.
Shift extract_shift(std::span<const double> filter, std::size_t k, MaskShiftRule rule = MaskShiftRule::Centroid);
std::vector<Shift> extract_shifts(const Tensor& filters, MaskShiftRule rule = MaskShiftRule::Centroid);
/// One-hot filters [count, K, K] with the mass at each given shift.
Tensor delta_filters(const std::vector<Shift>& shifts, std::size_t k);
/// Class index of a shift in the row-major K x K grid.
std::size_t shift_class(Shift s, std::size_t k);
Shift class_shift(std::size_t cls, std::size_t k);

/// Where item i is unreliable, every channel takes the mean of the items
/// reliable at that pixel; with no reliable item the value is kept.
Tensor mutual_inpaint(const Tensor& stack, const std::vector<Mask>& masks);

/// Residual estimate [1, H, W, 1] from inpainted, registered features.
Tensor fusionnet_forward(const Tensor& features, const ModelParams& params);

struct ForwardResult {
  Tensor sr;        // [1, H, W, 1]
  Tensor average;   // mean of the inpainted, registered inputs
  Tensor residual;  // FusionNet output before scaling by the residual std
  RegistrationFilterBank bank;
  std::vector<Mask> aligned_masks;
};

ForwardResult deepsum_forward(const Tensor& stack, const std::vector<Mask>& masks, const ModelParams& params);
/// Variant without RegNet: GDC uses delta filters at the given shifts
/// (N-1 of them, usually all zero for classically pre-registered inputs).
ForwardResult deepsum_forward_fixed(const Tensor& stack, const std::vector<Mask>& masks, const ModelParams& params,
                                    const std::vector<Shift>& shifts);

}  // namespace deepsum
