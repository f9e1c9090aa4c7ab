#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "deepsum/checkpoint.hpp"
#include "deepsum/config.hpp"
#include "deepsum/errors.hpp"
#include "deepsum/pipeline.hpp"
#include "deepsum/run_manifest.hpp"
#include "deepsum/training.hpp"

namespace deepsum::cli {
namespace fs = std::filesystem;
namespace {

struct LoadedConfig {
  PipelineConfig config;
  fs::path path;
  std::string text;
};

LoadedConfig load_config(const std::string& given) {
  const fs::path path = given.empty() ? default_config_path() : fs::path(given);
  if (!fs::exists(path)) {
    throw ConfigError("config " + path.string() + " not found (pass --config or set " + kConfigDirEnv + ")");
  }
  const ConfigFile file = ConfigFile::load(path);
  return {pipeline_from(file), path, file.text()};
}

// Manifest bookkeeping common to all commands.
class Run {
 public:
  Run(std::string command, const std::vector<std::string>& args, const LoadedConfig& cfg, std::uint64_t seed) {
    m_.command = std::move(command);
    m_.arguments = args;
    m_.config_path = cfg.path.string();
    m_.seed = seed;
    m_.run_id = RunManifest::make_run_id(m_.command, args, cfg.text, seed);
    m_.started = RunManifest::now();
  }
  void input(const fs::path& p) { m_.inputs.push_back(p.string()); }
  void output(const fs::path& p) { m_.outputs.push_back(p.string()); }
  void finish(const fs::path& beside) {
    m_.finished = RunManifest::now();
    m_.save(RunManifest::path_for(beside));
  }

 private:
  RunManifest m_;
};

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw DataError("cannot create " + file.parent_path().string() + ": " + ec.message());
  }
}

bool is_dataset(const fs::path& p) { return fs::is_regular_file(resolve_manifest(p)) && fs::is_directory(p); }

ModelParams load_model(const fs::path& path, const ModelConfig& config) {
  return ModelParams::from_checkpoint(config, load_checkpoint(path));
}

// Checkpoint and resume state per stage.
fs::path checkpoint_path(const fs::path& dir, Stage stage) { return dir / (std::string(stage_name(stage)) + ".ckpt"); }
fs::path state_path(const fs::path& ckpt) { return ckpt.string() + ".state"; }

void save_state(const fs::path& ckpt, std::size_t next_epoch, double best) {
  ConfigFile f = ConfigFile::parse("version = " + std::to_string(kConfigVersion));
  f.set("next_epoch", std::to_string(next_epoch));
  std::ostringstream os;
  os.precision(17);
  os << best;
  f.set("best_validation", os.str());
  f.save(state_path(ckpt));
}

std::size_t load_next_epoch(const fs::path& ckpt) {
  const fs::path p = state_path(ckpt);
  if (!fs::exists(p)) throw DataError("cannot resume: " + p.string() + " is missing");
  const ConfigFile f = ConfigFile::load(p);
  if (!f.has("next_epoch")) throw DataError(p.string() + " lacks next_epoch");
  return std::stoull(f.values().at("next_epoch"));
}

void require_checkpoint(const fs::path& path, Stage needed, Stage running) {
  if (!fs::exists(path)) {
    throw ConfigError(std::string(stage_name(running)) + " requires the " + stage_name(needed) + " checkpoint " +
                      path.string() + "; run train --stage " + stage_name(needed) + " first");
  }
}

struct GenArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> scenes, hr_size;
};

int gen_data(const GenArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  LoadedConfig cfg = load_config(a.config);
  if (a.scenes) cfg.config.data.scenes = *a.scenes;
  if (a.hr_size) cfg.config.data.hr_size = *a.hr_size;
  const std::uint64_t seed = a.seed.value_or(cfg.config.degradation.seed);
  cfg.config.validate();
  Run run("gen-data", args, cfg, seed);
  const auto entries = generate_dataset(cfg.config, a.out, seed);
  to_config_file(cfg.config).save(fs::path(a.out) / "config.cfg");
  run.output(a.out);
  run.finish(a.out);
  out << "wrote " << entries.size() << " scenes to " << a.out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string stage, data, config, out = "model";
  bool resume = false;
};

int train(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const LoadedConfig cfg = load_config(a.config);
  const Stage stage = parse_stage(a.stage);
  TrainConfig tc = cfg.config.stage_config(stage);
  const fs::path dir = a.out;
  const fs::path ckpt = checkpoint_path(dir, stage);
  const fs::path sisr_ckpt = checkpoint_path(dir, Stage::SisrPretrain);
  const fs::path regnet_ckpt = checkpoint_path(dir, Stage::RegnetPretrain);

  fs::path init_from;
  if (a.resume) {
    if (!fs::exists(ckpt)) throw ConfigError("cannot resume " + std::string(stage_name(stage)) + ": " + ckpt.string() + " is missing");
    init_from = ckpt;
    tc.start_epoch = load_next_epoch(ckpt);
  } else if (stage == Stage::RegnetPretrain) {
    require_checkpoint(sisr_ckpt, Stage::SisrPretrain, stage);
    init_from = sisr_ckpt;
  } else if (stage == Stage::EndToEnd) {
    require_checkpoint(sisr_ckpt, Stage::SisrPretrain, stage);
    if (tc.use_regnet) require_checkpoint(regnet_ckpt, Stage::RegnetPretrain, stage);
    init_from = tc.use_regnet ? regnet_ckpt : sisr_ckpt;
  }
  ModelParams params = init_from.empty() ? ModelParams::init(cfg.config.model, tc.seed)
                                         : load_model(init_from, cfg.config.model);

  Run run("train", args, cfg, tc.seed);
  const std::size_t r = cfg.config.model.r;
  const auto train_patches = build_patches(load_split(a.data, "train", r), cfg.config.patches, r, tc.seed);
  const auto val_patches = build_patches(load_split(a.data, "val", r), cfg.config.patches, r, tc.seed + 1);
  run.input(resolve_manifest(a.data));
  if (!init_from.empty()) run.input(init_from);

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  const fs::path log_path = dir / (std::string(stage_name(stage)) + ".log");
  std::ofstream log(log_path, a.resume ? std::ios::app : std::ios::trunc);
  const EpochSink sink = [&](const EpochRecord& rec) {
    const std::string line = log_line(rec);
    out << line << '\n';
    log << line << '\n';
    log.flush();
  };

  TrainResult result;
  switch (stage) {
    case Stage::SisrPretrain:
      result = pretrain_sisr(params, train_patches, val_patches, tc, sink);
      break;
    case Stage::RegnetPretrain:
      result = pretrain_regnet(params, train_patches, val_patches, tc, sink);
      break;
    case Stage::EndToEnd:
      result = train_end_to_end(params, train_patches, val_patches, tc, sink);
      break;
  }
  save_checkpoint(ckpt, params.tensors());
  const std::size_t next = result.history.empty() ? tc.start_epoch : result.history.back().epoch + 1;
  save_state(ckpt, next, result.best_validation);
  run.output(ckpt);
  run.output(log_path);
  run.finish(ckpt);
  out << "saved " << ckpt.string() << " (best validation " << result.best_validation << " at epoch "
      << result.best_epoch << ")\n";
  return kExitOk;
}

struct InferArgs {
  std::string model, scene, out, config;
  std::optional<std::size_t> sliding;
};

int infer(const InferArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const LoadedConfig cfg = load_config(a.config);
  const ModelParams params = load_model(a.model, cfg.config.model);
  SlidingConfig sc;
  sc.num_estimates = a.sliding.value_or(1);
  Run run("infer", args, cfg, cfg.config.train.seed);
  run.input(a.model);
  run.input(a.scene);
  const std::size_t r = cfg.config.model.r;
  if (is_dataset(a.scene)) {
    fs::create_directories(a.out);
    for (const auto& dir : manifest_split(load_manifest(resolve_manifest(a.scene)), "test")) {
      const Scene scene = load_scene(dir, kMinSceneImages, r);
      const fs::path file = fs::path(a.out) / (scene.id + ".png");
      save_png16(file, sliding_window_infer(scene, params, sc, cfg.config.train.use_regnet));
      out << "wrote " << file.string() << '\n';
    }
  } else {
    const Scene scene = load_scene(a.scene, kMinSceneImages, r);
    ensure_parent(a.out);
    save_png16(a.out, sliding_window_infer(scene, params, sc, cfg.config.train.use_regnet));
    out << "wrote " << a.out << '\n';
  }
  run.output(a.out);
  run.finish(a.out);
  return kExitOk;
}

struct EvalArgs {
  std::string pred, truth, config, out, split = "test";
};

int eval(const EvalArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const LoadedConfig cfg = load_config(a.config);
  const std::size_t r = cfg.config.model.r, n = cfg.config.model.n_images;
  const int d = cfg.config.train.d;
  std::vector<std::string> lines;
  double sum_psnr = 0.0, sum_ssim = 0.0;
  auto score = [&](const fs::path& pred, const Scene& scene) {
    const SceneScore s = evaluate_scene(load_png(pred), scene, n, r, d);
    lines.push_back(report_line(s.scene_id, s.mpsnr, s.ssim));
    sum_psnr += s.mpsnr.value;
    sum_ssim += s.ssim;
  };
  if (is_dataset(a.truth)) {
    for (const auto& dir : manifest_split(load_manifest(resolve_manifest(a.truth)), a.split)) {
      const Scene scene = load_scene(dir, kMinSceneImages, r);
      score(fs::path(a.pred) / (scene.id + ".png"), scene);
    }
    if (lines.empty()) throw DataError("no " + a.split + " scenes in " + a.truth);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "mean scenes=%zu mpsnr_db=%.6f ssim=%.6f", lines.size(),
                  sum_psnr / double(lines.size()), sum_ssim / double(lines.size()));
    lines.push_back(buf);
  } else {
    score(a.pred, load_scene(a.truth, kMinSceneImages, r));
  }
  for (const auto& l : lines) out << l << '\n';
  if (!a.out.empty()) {
    Run run("eval", args, cfg, cfg.config.train.seed);
    run.input(a.pred);
    run.input(a.truth);
    ensure_parent(a.out);
    std::ofstream os(a.out, std::ios::trunc);
    if (!os) throw DataError("cannot write " + a.out);
    for (const auto& l : lines) os << l << '\n';
    run.output(a.out);
    run.finish(a.out);
  }
  return kExitOk;
}

struct BaselineArgs {
  std::string method, scene, out, config, model;
};

int baseline(const BaselineArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const LoadedConfig cfg = load_config(a.config);
  const BaselineMethod method = parse_baseline(a.method);
  std::optional<ModelParams> params;
  if (!a.model.empty()) params = load_model(a.model, cfg.config.model);
  Run run("baseline", args, cfg, cfg.config.train.seed);
  run.input(a.scene);
  if (!a.model.empty()) run.input(a.model);
  const std::size_t r = cfg.config.model.r;
  const ModelParams* p = params ? &*params : nullptr;
  if (is_dataset(a.scene)) {
    fs::create_directories(a.out);
    for (const auto& dir : manifest_split(load_manifest(resolve_manifest(a.scene)), "test")) {
      const Scene scene = load_scene(dir, kMinSceneImages, r);
      const fs::path file = fs::path(a.out) / (scene.id + ".png");
      save_png16(file, run_baseline(method, scene, cfg.config, p));
      out << "wrote " << file.string() << '\n';
    }
  } else {
    const Scene scene = load_scene(a.scene, kMinSceneImages, r);
    ensure_parent(a.out);
    save_png16(a.out, run_baseline(method, scene, cfg.config, p));
    out << "wrote " << a.out << '\n';
  }
  run.output(a.out);
  run.finish(a.out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DeepSUM multi-image super-resolution: data generation, training, inference, evaluation"};
  app.name("deepsum");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write synthetic scenes, truth sidecars and a manifest");
  g->add_option("--config", gen.config, "Config file (default: $DEEPSUM_CONFIG_DIR/default.cfg)");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--seed", gen.seed, "Dataset seed (default: degrade.seed)");
  g->add_option("--scenes", gen.scenes, "Number of scenes");
  g->add_option("--hr-size", gen.hr_size, "HR side in pixels, a multiple of the scale factor");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Run one training stage");
  t->add_option("--stage", tr.stage, "sisr, regnet or e2e")->required();
  t->add_option("--data", tr.data, "Dataset directory or manifest")->required();
  t->add_option("--config", tr.config, "Config file");
  t->add_option("--out", tr.out, "Checkpoint directory")->capture_default_str();
  t->add_flag("--resume", tr.resume, "Continue this stage from its checkpoint");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Super-resolve a scene (or every test scene of a dataset)");
  i->add_option("--model", inf.model, "End-to-end checkpoint")->required();
  i->add_option("--scene", inf.scene, "Scene directory or dataset directory")->required();
  i->add_option("--sliding", inf.sliding, "Number of sliding-window estimates to average");
  i->add_option("--out", inf.out, "Output PNG (or directory for a dataset)")->required();
  i->add_option("--config", inf.config, "Config file");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against HR targets");
  e->add_option("--pred", ev.pred, "Predicted PNG (or directory of <scene>.png)")->required();
  e->add_option("--truth", ev.truth, "Scene directory (or dataset directory)")->required();
  e->add_option("--split", ev.split, "Split scored in dataset mode")->capture_default_str();
  e->add_option("--out", ev.out, "Also write the report to this file");
  e->add_option("--config", ev.config, "Config file");

  BaselineArgs bl;
  auto* b = app.add_subcommand("baseline", "Run a classical or SISR baseline");
  b->add_option("--method", bl.method, "bicubic, bicubic-mean, ibp, btv, sisr or sisr-mean")->required();
  b->add_option("--scene", bl.scene, "Scene directory or dataset directory")->required();
  b->add_option("--out", bl.out, "Output PNG (or directory for a dataset)")->required();
  b->add_option("--model", bl.model, "SISR-pretrained checkpoint for sisr and sisr-mean");
  b->add_option("--config", bl.config, "Config file");

  std::vector<std::string> argv_store{"deepsum"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (g->parsed()) return gen_data(gen, args, out);
    if (t->parsed()) return train(tr, args, out);
    if (i->parsed()) return infer(inf, args, out);
    if (e->parsed()) return eval(ev, args, out);
    if (b->parsed()) return baseline(bl, args, out);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kExitConfig;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const NumericError& ex) {
    err << "numeric error: " << ex.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace deepsum::cli
