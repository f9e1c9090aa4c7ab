#pragma once

// Classical comparison methods: Bicubic, Bicubic+Mean, IBP, BTV, SISR and
// SISR+Mean. All of them work on the HR grid of the scene's clearest image
// and read LR pixels only where the LR masks are clear.

#include <cstddef>
#include <vector>

#include "deepsum/imaging.hpp"
#include "deepsum/model.hpp"
#include "deepsum/registration.hpp"
#include "deepsum/scene.hpp"

namespace deepsum {

/// LR_i = decimate_r(blur(apply_shift(HR, shifts[i]))), blur with edge
/// clamping and decimation sampling r*y + r/2 (the generator's model when
/// shifts are integer HR pixels).
struct ForwardModel {
  std::vector<double> kernel;  // kernel_size x kernel_size, row-major, sums to 1
  std::size_t kernel_size = 1;
  std::size_t r = 3;
  std::vector<Shift> shifts;

  static ForwardModel gaussian(double sigma, std::size_t r, std::vector<Shift> shifts);
  /// Throws std::invalid_argument if the kernel is not odd, square and
  /// normalized, or r is zero.
  void validate() const;

  Image simulate(const Image& hr, std::size_t image) const;
  /// Exact adjoint of simulate: lr (LR grid) back to the HR grid.
  Image back_project(const Image& lr, std::size_t image) const;
};

/// Keeps the n clearest images (fewest masked pixels, stable).
Scene clearest_subset(const Scene& scene, std::size_t n);

/// Bicubic upsampling of the clearest image.
Image bicubic_baseline(const Scene& scene, std::size_t r);
/// Per-pixel mean over reliable images; plain mean where none is reliable.
Image reliable_mean(const std::vector<Image>& images, const std::vector<Mask>& masks);
/// Upsample every image, register to the clearest, average reliable values.
Image bicubic_mean(const Scene& scene, std::size_t r, int bound);

/// Shifts from the classical registration of the upsampled stack, in scene
/// order, with the given Gaussian blur.
ForwardModel estimate_forward_model(const Scene& scene, std::size_t r, int bound, double blur_sigma);

/// Mean squared LR residual over clear pixels of all images.
double data_fidelity_mse(const Scene& scene, const ForwardModel& model, const Image& hr);

struct IbpConfig {
  std::size_t iterations = 5;  // early stopping is the only regularization
  // Conjugate directions with exact line search. Otherwise plain gradient
  // steps of step / L, L the largest eigenvalue of the normal operator.
  bool conjugate = true;
  double step = 1.0;  // multiplier on the line-search or 1 / L step
};

struct SolverResult {
  Image image;
  std::vector<double> objective;  // per evaluated iterate, starting with init
  bool stopped_early = false;
};

/// Iterative back-projection: descent on the masked data-fidelity MSE along
/// back-projected residuals. Stops after 3 consecutive increases and returns the best iterate.
SolverResult ibp(const Scene& scene, const ForwardModel& model, const Image& init, const IbpConfig& cfg = {});

struct BtvConfig {
  std::size_t iterations = 50;
  double step = 0.02;  // fraction of the init's dynamic range
  double reg_weight = 0.01;
  int radius = 2;
  double alpha = 0.6;
};

/// sum_{|l|,|m|<=P} alpha^(|l|+|m|) ||x - shift(x, (l, m))||_1
double btv_regularizer(const Image& x, int radius, double alpha);

/// Sign-subgradient descent on the L1 data term plus the bilateral TV
/// regularizer. Same divergence guard as ibp.
SolverResult btv(const Scene& scene, const ForwardModel& model, const Image& init, const BtvConfig& cfg = {});

/// SISR output of each image, registered with the classical shifts and
/// averaged over reliable values. With max_images 1 this is plain SISR on
/// the clearest image.
Image sisr_and_mean(const Scene& scene, const ModelParams& params, int bound, std::size_t max_images);

}  // namespace deepsum
