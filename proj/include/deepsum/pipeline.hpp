#pragma once

// Whole-dataset plumbing shared by the command-line tools and the
// acceptance suite: dataset generation, split loading, patch extraction,
// scene scoring and baseline dispatch.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepsum/config.hpp"
#include "deepsum/metrics.hpp"
#include "deepsum/scene.hpp"

namespace deepsum {

/// Writes data.scenes synthetic scenes (scene0000, ...) with truth sidecars
/// and a manifest under out. Scenes are assigned train, then val, then test
/// in order, using the split fractions. Returns the manifest entries.
std::vector<ManifestEntry> generate_dataset(const PipelineConfig& config, const std::filesystem::path& out,
                                            std::uint64_t seed);
/// The same scenes in memory, without touching the disk.
std::vector<Scene> synthesize_dataset(const PipelineConfig& config, std::uint64_t seed, std::size_t first,
                                      std::size_t count);
/// Split sizes (train, val, test) for a scene count.
std::array<std::size_t, 3> split_sizes(const DataSplit& split);

/// Accepts a manifest file or a directory containing scenes.txt.
std::filesystem::path resolve_manifest(const std::filesystem::path& data);
std::vector<Scene> load_split(const std::filesystem::path& data, const std::string& split, std::size_t r);

/// Patches of every scene, each scene drawing from its own generator
/// seeded by (seed, scene index).
std::vector<PatchSample> build_patches(const std::vector<Scene>& scenes, const PatchPolicy& policy, std::size_t r,
                                       std::uint64_t seed);

struct SceneScore {
  std::string scene_id;
  CorrectedScore mpsnr;
  double ssim = 0.0;
};

/// mPSNR against the scene's HR, with joint_clear the union of the
/// registered masks of the n_images clearest LR images. SSIM is taken
/// between the brightness-corrected SR crop and the HR window at the best
/// offset.
SceneScore evaluate_scene(const Image& sr, const Scene& scene, std::size_t n_images, std::size_t r, int d);

enum class BaselineMethod { Bicubic, BicubicMean, Ibp, Btv, Sisr, SisrMean };
BaselineMethod parse_baseline(const std::string& name);
const char* baseline_name(BaselineMethod method);

/// Runs a baseline on the n_images clearest images of the scene. SISR
/// methods need params.
Image run_baseline(BaselineMethod method, const Scene& scene, const PipelineConfig& config,
                   const ModelParams* params = nullptr);

}  // namespace deepsum
