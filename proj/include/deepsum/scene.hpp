#pragma once

// One reconstruction task and its on-disk layout:
//
//   <scene>/LR000.png ... LRnnn.png   16-bit low-resolution acquisitions
//   <scene>/QM000.png ... QMnnn.png   per-LR quality masks (nonzero = clear)
//   <scene>/HR.png, <scene>/SM.png    optional target and its mask
//
// A manifest is a text file with one "<split> <scene-dir>" pair per line,
// scene directories relative to the manifest. Blank lines and lines
// starting with '#' are ignored.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepsum/imaging.hpp"

namespace deepsum {

inline constexpr std::size_t kMinSceneImages = 9;

struct Scene {
  std::string id;
  Band band = Band::Synthetic;
  std::vector<Image> lr;
  std::vector<Mask> lr_masks;
  std::optional<Image> hr;
  std::optional<Mask> hr_mask;

  std::size_t size() const { return lr.size(); }
};

/// Loads, clips the LR images to 14 bits, and validates dimensions
/// (HR = scale x LR). Throws DataError on any violation.
Scene load_scene(const std::filesystem::path& dir, std::size_t min_images = kMinSceneImages, std::size_t scale = 3);
void save_scene(const std::filesystem::path& dir, const Scene& scene);

/// Image indices by increasing masked-pixel count; ties keep file order.
std::vector<std::size_t> clearest_order(const std::vector<Mask>& masks);

struct ManifestEntry {
  std::string split;
  std::filesystem::path scene_dir;  // absolute once loaded
};

inline constexpr const char* kManifestName = "scenes.txt";

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
/// Writes scene paths relative to the manifest's directory.
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
/// Entries of one split, in manifest order.
std::vector<std::filesystem::path> manifest_split(const std::vector<ManifestEntry>& entries, const std::string& split);

}  // namespace deepsum
