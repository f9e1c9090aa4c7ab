#include "deepsum/scene.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "deepsum/errors.hpp"

namespace deepsum {
namespace {

std::string indexed_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03zu.png", prefix, i);
  return buf;
}

Band band_from_path(const std::filesystem::path& dir) {
  for (const auto& part : dir) {
    if (part == "NIR") return Band::Nir;
    if (part == "RED") return Band::Red;
  }
  return Band::Synthetic;
}

std::string dims(std::size_t h, std::size_t w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace

Scene load_scene(const std::filesystem::path& dir, std::size_t min_images, std::size_t scale) {
  if (!std::filesystem::is_directory(dir)) throw DataError("scene directory not found: " + dir.string());
  Scene scene;
  scene.id = dir.filename().string();
  if (scene.id.empty()) scene.id = dir.parent_path().filename().string();
  scene.band = band_from_path(dir);
  for (std::size_t i = 0;; ++i) {
    const auto lr_path = dir / indexed_name("LR", i);
    if (!std::filesystem::exists(lr_path)) break;
    const auto qm_path = dir / indexed_name("QM", i);
    if (!std::filesystem::exists(qm_path)) throw DataError("missing quality mask " + qm_path.string());
    Image lr = clip_lr(load_png(lr_path));
    lr.band = scene.band;
    Mask qm = load_mask_png(qm_path);
    if (qm.height != lr.height || qm.width != lr.width) {
      throw DataError(qm_path.string() + " is " + dims(qm.height, qm.width) + ", expected " + dims(lr.height, lr.width));
    }
    if (!scene.lr.empty() && (lr.height != scene.lr[0].height || lr.width != scene.lr[0].width)) {
      throw DataError(lr_path.string() + " differs in size from LR000.png");
    }
    scene.lr.push_back(std::move(lr));
    scene.lr_masks.push_back(std::move(qm));
  }
  if (scene.lr.size() < min_images) {
    throw DataError(dir.string() + " has " + std::to_string(scene.lr.size()) + " LR images, need at least " +
                    std::to_string(min_images));
  }
  const auto hr_path = dir / "HR.png";
  if (std::filesystem::exists(hr_path)) {
    Image hr = load_png(hr_path);
    hr.band = scene.band;
    if (hr.height != scale * scene.lr[0].height || hr.width != scale * scene.lr[0].width) {
      throw DataError("HR.png is " + dims(hr.height, hr.width) + ", expected " + std::to_string(scale) + "x LR size");
    }
    Mask sm(hr.height, hr.width, true);
    const auto sm_path = dir / "SM.png";
    if (std::filesystem::exists(sm_path)) {
      sm = load_mask_png(sm_path);
      if (sm.height != hr.height || sm.width != hr.width) throw DataError("SM.png does not match HR.png");
    }
    scene.hr = std::move(hr);
    scene.hr_mask = std::move(sm);
  }
  return scene;
}

void save_scene(const std::filesystem::path& dir, const Scene& scene) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < scene.lr.size(); ++i) {
    save_png16(dir / indexed_name("LR", i), scene.lr[i]);
    save_mask_png(dir / indexed_name("QM", i), scene.lr_masks[i]);
  }
  if (scene.hr) save_png16(dir / "HR.png", *scene.hr);
  if (scene.hr_mask) save_mask_png(dir / "SM.png", *scene.hr_mask);
}

std::vector<std::size_t> clearest_order(const std::vector<Mask>& masks) {
  std::vector<std::size_t> order(masks.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> masked(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) masked[i] = masks[i].size() - masks[i].count_clear();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return masked[a] < masked[b]; });
  return order;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string dir, extra;
    if (!(ls >> e.split >> dir) || (ls >> extra)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected '<split> <scene-dir>'");
    }
    e.scene_dir = std::filesystem::path(dir).is_absolute() ? std::filesystem::path(dir) : base / dir;
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest " + path.string());
  const auto base = path.parent_path();
  os << "# split scene-dir\n";
  for (const auto& e : entries) {
    const auto rel = base.empty() ? e.scene_dir : e.scene_dir.lexically_relative(base);
    os << e.split << ' ' << (rel.empty() ? e.scene_dir : rel).generic_string() << '\n';
  }
  if (!os) throw DataError("failed writing manifest " + path.string());
}

std::vector<std::filesystem::path> manifest_split(const std::vector<ManifestEntry>& entries, const std::string& split) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e.scene_dir);
  }
  return out;
}

}  // namespace deepsum
