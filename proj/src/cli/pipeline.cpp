#include "deepsum/pipeline.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include "deepsum/baselines.hpp"
#include "deepsum/errors.hpp"
#include "deepsum/registration.hpp"

namespace deepsum {
namespace {

std::uint64_t scene_seed(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(index), std::uint64_t{0xda7a}};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (std::uint64_t{words[0]} << 32) | words[1];
}

std::string scene_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene%04zu", index);
  return buf;
}

SyntheticScene make_scene(const PipelineConfig& config, std::uint64_t seed, std::size_t index) {
  const std::uint64_t s = scene_seed(seed, index);
  DegradationConfig dc = config.degradation;
  dc.seed = s;
  const Image hr = generate_hr_texture(config.data.hr_size, config.data.hr_size, s ^ 0x9e3779b97f4a7c15ull);
  return synthesize_scene(hr, dc, scene_name(index));
}

}  // namespace

std::array<std::size_t, 3> split_sizes(const DataSplit& split) {
  const auto test = static_cast<std::size_t>(std::llround(split.test_fraction * double(split.scenes)));
  const auto val = static_cast<std::size_t>(std::llround(split.val_fraction * double(split.scenes)));
  if (test + val >= split.scenes) throw ConfigError("split leaves no training scenes");
  return {split.scenes - val - test, val, test};
}

std::vector<Scene> synthesize_dataset(const PipelineConfig& config, std::uint64_t seed, std::size_t first,
                                      std::size_t count) {
  std::vector<Scene> out;
  for (std::size_t k = first; k < first + count; ++k) out.push_back(make_scene(config, seed, k).scene);
  return out;
}

std::vector<ManifestEntry> generate_dataset(const PipelineConfig& config, const std::filesystem::path& out,
                                            std::uint64_t seed) {
  config.validate();
  const auto sizes = split_sizes(config.data);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());
  std::vector<ManifestEntry> entries;
  for (std::size_t k = 0; k < config.data.scenes; ++k) {
    const SyntheticScene syn = make_scene(config, seed, k);
    const auto dir = out / syn.scene.id;
    save_scene(dir, syn.scene);
    save_truth(dir / kTruthFileName, syn.truth);
    const char* split = k < sizes[0] ? "train" : k < sizes[0] + sizes[1] ? "val" : "test";
    entries.push_back({split, std::filesystem::absolute(dir)});
  }
  save_manifest(out / kManifestName, entries);
  return entries;
}

std::filesystem::path resolve_manifest(const std::filesystem::path& data) {
  if (std::filesystem::is_directory(data)) return data / kManifestName;
  return data;
}

std::vector<Scene> load_split(const std::filesystem::path& data, const std::string& split, std::size_t r) {
  std::vector<Scene> out;
  for (const auto& dir : manifest_split(load_manifest(resolve_manifest(data)), split)) {
    out.push_back(load_scene(dir, kMinSceneImages, r));
  }
  return out;
}

std::vector<PatchSample> build_patches(const std::vector<Scene>& scenes, const PatchPolicy& policy, std::size_t r,
                                       std::uint64_t seed) {
  std::vector<PatchSample> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::mt19937_64 rng(scene_seed(seed, i));
    auto p = extract_patches(scenes[i], policy, r, kPreRegistrationBound, rng);
    out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return out;
}

SceneScore evaluate_scene(const Image& sr, const Scene& scene, std::size_t n_images, std::size_t r, int d) {
  if (!scene.hr || !scene.hr_mask) throw DataError("scene " + scene.id + " has no HR target");
  if (sr.height != scene.hr->height || sr.width != scene.hr->width) {
    throw DataError("prediction for " + scene.id + " is " + std::to_string(sr.height) + "x" + std::to_string(sr.width) +
                    ", HR is " + std::to_string(scene.hr->height) + "x" + std::to_string(scene.hr->width));
  }
  const RegisteredStack reg = prepare_ilr(clearest_subset(scene, n_images), r, kPreRegistrationBound);
  SceneScore out;
  out.scene_id = scene.id;
  out.mpsnr = mpsnr(sr, *scene.hr, *scene.hr_mask, joint_clear_mask(reg.masks), d);
  const std::size_t ch = sr.height - 2 * d, cw = sr.width - 2 * d;
  Image corrected = crop(sr, d, d, ch, cw);
  for (double& p : corrected.pixels) p += out.mpsnr.brightness_b;
  out.ssim = ssim(corrected, crop(*scene.hr, out.mpsnr.u, out.mpsnr.v, ch, cw));
  return out;
}

BaselineMethod parse_baseline(const std::string& name) {
  if (name == "bicubic") return BaselineMethod::Bicubic;
  if (name == "bicubic-mean") return BaselineMethod::BicubicMean;
  if (name == "ibp") return BaselineMethod::Ibp;
  if (name == "btv") return BaselineMethod::Btv;
  if (name == "sisr") return BaselineMethod::Sisr;
  if (name == "sisr-mean") return BaselineMethod::SisrMean;
  throw ConfigError("unknown baseline method '" + name + "'");
}

const char* baseline_name(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::Bicubic:
      return "bicubic";
    case BaselineMethod::BicubicMean:
      return "bicubic-mean";
    case BaselineMethod::Ibp:
      return "ibp";
    case BaselineMethod::Btv:
      return "btv";
    case BaselineMethod::Sisr:
      return "sisr";
    case BaselineMethod::SisrMean:
      return "sisr-mean";
  }
  return "unknown";
}

Image run_baseline(BaselineMethod method, const Scene& scene, const PipelineConfig& config, const ModelParams* params) {
  const std::size_t r = config.model.r, n = config.model.n_images;
  const Scene sub = clearest_subset(scene, n);
  switch (method) {
    case BaselineMethod::Bicubic:
      return bicubic_baseline(sub, r);
    case BaselineMethod::BicubicMean:
      return bicubic_mean(sub, r, kPreRegistrationBound);
    case BaselineMethod::Ibp:
    case BaselineMethod::Btv: {
      const Image init = bicubic_mean(sub, r, kPreRegistrationBound);
      const ForwardModel model = estimate_forward_model(sub, r, kPreRegistrationBound, config.baseline_blur_sigma);
      return method == BaselineMethod::Ibp ? ibp(sub, model, init, config.ibp).image
                                           : btv(sub, model, init, config.btv).image;
    }
    case BaselineMethod::Sisr:
    case BaselineMethod::SisrMean:
      if (!params) throw ConfigError(std::string(baseline_name(method)) + " needs a pretrained SISR checkpoint (--model)");
      return sisr_and_mean(sub, *params, kPreRegistrationBound, method == BaselineMethod::Sisr ? 1 : n);
  }
  throw ConfigError("unknown baseline method");
}

}  // namespace deepsum
