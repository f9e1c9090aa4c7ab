#pragma once

// Synthetic scenes with known degradations, and training-patch extraction.
//
// Forward model per LR image: subpixel translation of the HR source
// (bilinear, content moves by the shift), Gaussian blur, decimation by r
// (sampling HR pixel r*i + r/2), additive Gaussian noise, a per-image
// brightness offset, elliptical clouds (mask false, pixel set to a bright
// constant), clipping to 14 bits and rounding to integer counts.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "deepsum/imaging.hpp"
#include "deepsum/registration.hpp"
#include "deepsum/scene.hpp"

namespace deepsum {

struct DegradationConfig {
  std::size_t r = 3;
  double blur_sigma = 1.0;          // HR pixels
  double max_subpixel_shift = 1.0;  // LR pixels, per axis
  double brightness_jitter = 300.0;
  double noise_sigma = 50.0;
  double cloud_coverage = 0.1;  // mean masked fraction per LR image, < 1
  double cloud_value = 16000.0;
  double hr_cloud_coverage = 0.0;
  std::size_t n_images = 9;
  std::size_t n_images_max = 9;  // scene size drawn uniformly in [n_images, n_images_max]
  std::uint64_t seed = 1;

  void validate() const;
};

/// Ground truth of one synthetic LR image, in stored (sorted) order.
struct ImageTruth {
  std::size_t source_index = 0;  // order of generation before sorting
  double shift_dy = 0.0;         // LR pixels, content moves by +shift
  double shift_dx = 0.0;
  double offset = 0.0;
  double clear_fraction = 1.0;
};

struct SceneTruth {
  std::string scene_id;
  std::size_t r = 3;
  std::vector<ImageTruth> images;
};

/// Normalized 1D Gaussian taps, radius ceil(3 sigma); {1} when sigma <= 0.
std::vector<double> gaussian_taps(double sigma);
/// Separable blur with edge replication.
Image gaussian_blur(const Image& image, double sigma);
/// Bilinear translation by a real shift (content moves by +shift), edge clamp.
Image subpixel_shift(const Image& image, double dy, double dx);
/// Keeps HR pixel (r*i + r/2, r*j + r/2) for each LR pixel (i, j).
Image decimate(const Image& image, std::size_t r);

/// Noise-free part of the forward model (shift, blur, decimate) for one image.
Image degrade_clean(const Image& hr, double shift_dy_lr, double shift_dx_lr, const DegradationConfig& cfg);

/// Procedural land-cover-like texture: piecewise-constant parcels with
/// smooth shading, linear features, and fine grain. Integer counts in
/// roughly [1500, 12000].
Image generate_hr_texture(std::size_t height, std::size_t width, std::uint64_t seed);

struct SyntheticScene {
  Scene scene;
  SceneTruth truth;
};

/// Images are sorted by increasing masked-pixel count, so index 0 is the
/// clearest. Throws std::invalid_argument if hr dims are not divisible by r.
SyntheticScene synthesize_scene(const Image& hr_source, const DegradationConfig& cfg, const std::string& scene_id);

inline constexpr const char* kTruthFileName = "truth.txt";

void save_truth(const std::filesystem::path& path, const SceneTruth& truth);
SceneTruth load_truth(const std::filesystem::path& path);

struct PatchPolicy {
  std::size_t patch_hr = 96;
  std::size_t patches_per_scene = 100;
  double min_clear_lr = 0.70;
  double min_clear_hr = 0.85;
  std::size_t min_images = 9;
  std::size_t max_attempts_factor = 20;  // attempts = factor * patches_per_scene

  void validate(std::size_t r) const;
};

/// One training sample: min_images registered ILR patches (clearest first),
/// their HR-grid masks after registration, and the HR patch.
struct PatchSample {
  std::vector<Image> ilr;
  std::vector<Mask> masks;
  Image hr;
  Mask hr_mask;
};

/// HR-pixel search bound for registering upsampled stacks: two images may
/// sit up to 2 LR pixels apart, which is 6 HR pixels at r = 3.
inline constexpr int kPreRegistrationBound = 6;

/// Bicubic upsampling and classical registration of a whole scene, reference
/// = clearest image. Masked LR pixels are filled (fill_masked) before
/// upsampling. Result is in the scene's image order.
RegisteredStack prepare_ilr(const Scene& scene, std::size_t r, int bound);

/// Acceptance rule for the patch whose LR-grid corner is (y_lr, x_lr): the
/// min_images clearest qualifying images, clearest first, or an empty list
/// if the patch is rejected.
std::vector<std::size_t> select_patch_images(const Scene& scene, const PatchPolicy& policy, std::size_t r,
                                             std::size_t y_lr, std::size_t x_lr);

/// Random LR-grid-aligned patches passing the clear-fraction rules. Images
/// qualifying beyond min_images are ranked by clear pixels in the patch and
/// the clearest kept. May return fewer than patches_per_scene (or none).
std::vector<PatchSample> extract_patches(const Scene& scene, const PatchPolicy& policy, std::size_t r, int bound,
                                         std::mt19937_64& rng);

}  // namespace deepsum
