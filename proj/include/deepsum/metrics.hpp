#pragma once

// Shift- and brightness-corrected scoring.
//
// The SR image is cropped by d on every side; for each offset (u, v) in
// [0, 2d]^2 the HR window starting at (u, v) is compared with the crop after
// adding the brightness term b(u, v) = mean(HR window - crop). Only pixels
// clear in the HR mask (at HR coordinates) and in joint_clear (at SR
// coordinates) count. The best offset minimizes the corrected MSE; exact
// ties go to the offset nearest (d, d), then smallest u, then v.

#include <cstddef>
#include <string>

#include "deepsum/errors.hpp"
#include "deepsum/imaging.hpp"
#include "deepsum/tensor.hpp"

namespace deepsum {

inline constexpr int kDefaultCropBorder = 3;
inline constexpr double kPsnrCapDb = 120.0;

class UnscorableSample : public DataError {
 public:
  using DataError::DataError;
};

struct CorrectedScore {
  double value = 0.0;  // corrected MSE (counts^2) or mPSNR (dB)
  int u = 0;
  int v = 0;
  double brightness_b = 0.0;
  std::size_t clear_pixel_count = 0;
  double clear_fraction = 0.0;  // clear pixels / crop area at the best offset
};

/// Minimum corrected MSE over all offsets. Throws UnscorableSample if no
/// offset has a clear pixel.
CorrectedScore corrected_mse(const Image& sr, const Image& hr, const Mask& hr_mask, const Mask& joint_clear,
                             int d = kDefaultCropBorder);

/// Differentiable corrected MSE of sr ([1, H, W, 1]); the minimizing offset
/// is treated as a constant. The chosen offset is written to score if given.
Tensor corrected_loss(const Tensor& sr, const Image& hr, const Mask& hr_mask, const Mask& joint_clear,
                      int d = kDefaultCropBorder, CorrectedScore* score = nullptr);

/// 10 log10(65535^2 / cMSE) at the best offset, capped at 120 dB.
CorrectedScore mpsnr(const Image& sr, const Image& hr, const Mask& hr_mask, const Mask& joint_clear,
                     int d = kDefaultCropBorder);
double psnr_from_mse(double mse);

struct SsimTerms {
  double ssim = 0.0;
  double luminance = 0.0;
  double contrast = 0.0;
  double structure = 0.0;
};

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range
/// 65535, over window positions fully inside the image (window shrinks for
/// images smaller than 11 pixels).
SsimTerms ssim_terms(const Image& x, const Image& y);
inline double ssim(const Image& x, const Image& y) { return ssim_terms(x, y).ssim; }

/// OR of a set of aligned masks.
Mask joint_clear_mask(const std::vector<Mask>& masks);

/// "scene=<id> mpsnr_db=<dB> ssim=<s> u=<u> v=<v> b=<b> clear=<fraction>"
std::string report_line(const std::string& scene_id, const CorrectedScore& score, double ssim_value);

}  // namespace deepsum
