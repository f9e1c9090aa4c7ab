#include "deepsum/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "deepsum/errors.hpp"

#ifndef DEEPSUM_SOURCE_CONFIG_DIR
#define DEEPSUM_SOURCE_CONFIG_DIR "configs"
#endif

namespace deepsum {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + ": '" + v + "' is not a number");
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long n = std::stoull(v, &used);
      if (used == v.size()) return n;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config key " + key + ": '" + v + "' is not a non-negative integer");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": '" + v + "' is not a boolean");
}

// One binding per key: how to read it into and write it out of PipelineConfig.
struct Binding {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> read;
  std::function<std::string(const PipelineConfig&)> write;
};

template <typename T>
Binding size_key(std::string key, T PipelineConfig::*group, std::size_t T::*field) {
  return {key, [=](PipelineConfig& c, const std::string& v) { (c.*group).*field = to_unsigned(key, v); },
          [=](const PipelineConfig& c) { return std::to_string((c.*group).*field); }};
}

template <typename T>
Binding seed_key(std::string key, T PipelineConfig::*group, std::uint64_t T::*field) {
  return {key, [=](PipelineConfig& c, const std::string& v) { (c.*group).*field = to_unsigned(key, v); },
          [=](const PipelineConfig& c) { return std::to_string((c.*group).*field); }};
}

template <typename T>
Binding real_key(std::string key, T PipelineConfig::*group, double T::*field) {
  return {key, [=](PipelineConfig& c, const std::string& v) { (c.*group).*field = to_double(key, v); },
          [=](const PipelineConfig& c) { return format_double((c.*group).*field); }};
}

template <typename T>
Binding int_key(std::string key, T PipelineConfig::*group, int T::*field) {
  return {key, [=](PipelineConfig& c, const std::string& v) { (c.*group).*field = int(to_unsigned(key, v)); },
          [=](const PipelineConfig& c) { return std::to_string((c.*group).*field); }};
}

const std::vector<Binding>& bindings() {
  using P = PipelineConfig;
  static const std::vector<Binding> all = [] {
    std::vector<Binding> b = {
        size_key("data.scenes", &P::data, &DataSplit::scenes),
        size_key("data.hr_size", &P::data, &DataSplit::hr_size),
        real_key("data.val_fraction", &P::data, &DataSplit::val_fraction),
        real_key("data.test_fraction", &P::data, &DataSplit::test_fraction),
        size_key("degrade.r", &P::degradation, &DegradationConfig::r),
        real_key("degrade.blur_sigma", &P::degradation, &DegradationConfig::blur_sigma),
        real_key("degrade.max_subpixel_shift", &P::degradation, &DegradationConfig::max_subpixel_shift),
        real_key("degrade.brightness_jitter", &P::degradation, &DegradationConfig::brightness_jitter),
        real_key("degrade.noise_sigma", &P::degradation, &DegradationConfig::noise_sigma),
        real_key("degrade.cloud_coverage", &P::degradation, &DegradationConfig::cloud_coverage),
        real_key("degrade.cloud_value", &P::degradation, &DegradationConfig::cloud_value),
        real_key("degrade.hr_cloud_coverage", &P::degradation, &DegradationConfig::hr_cloud_coverage),
        size_key("degrade.n_images", &P::degradation, &DegradationConfig::n_images),
        size_key("degrade.n_images_max", &P::degradation, &DegradationConfig::n_images_max),
        seed_key("degrade.seed", &P::degradation, &DegradationConfig::seed),
        size_key("patch.size_hr", &P::patches, &PatchPolicy::patch_hr),
        size_key("patch.per_scene", &P::patches, &PatchPolicy::patches_per_scene),
        real_key("patch.min_clear_lr", &P::patches, &PatchPolicy::min_clear_lr),
        real_key("patch.min_clear_hr", &P::patches, &PatchPolicy::min_clear_hr),
        size_key("patch.min_images", &P::patches, &PatchPolicy::min_images),
        size_key("patch.max_attempts_factor", &P::patches, &PatchPolicy::max_attempts_factor),
        size_key("model.n_images", &P::model, &ModelConfig::n_images),
        size_key("model.r", &P::model, &ModelConfig::r),
        size_key("model.features", &P::model, &ModelConfig::features),
        size_key("model.regnet_first_channels", &P::model, &ModelConfig::regnet_first_channels),
        size_key("model.filter_size", &P::model, &ModelConfig::filter_size),
        size_key("model.sisr_layers", &P::model, &ModelConfig::sisr_layers),
        size_key("model.regnet_2d_layers", &P::model, &ModelConfig::regnet_2d_layers),
        size_key("model.fusion_layers", &P::model, &ModelConfig::fusion_layers),
        real_key("model.leaky_slope", &P::model, &ModelConfig::leaky_slope),
        int_key("train.d", &P::train, &TrainConfig::d),
        seed_key("train.seed", &P::train, &TrainConfig::seed),
        size_key("train.validate_every", &P::train, &TrainConfig::validate_every),
        size_key("train.patience", &P::train, &TrainConfig::patience),
        size_key("sisr.epochs", &P::sisr, &StageSchedule::epochs),
        real_key("sisr.learning_rate", &P::sisr, &StageSchedule::learning_rate),
        size_key("sisr.batch_size", &P::sisr, &StageSchedule::batch_size),
        real_key("sisr.final_lr_fraction", &P::sisr, &StageSchedule::final_lr_fraction),
        size_key("regnet.epochs", &P::regnet, &StageSchedule::epochs),
        real_key("regnet.learning_rate", &P::regnet, &StageSchedule::learning_rate),
        size_key("regnet.batch_size", &P::regnet, &StageSchedule::batch_size),
        real_key("regnet.final_lr_fraction", &P::regnet, &StageSchedule::final_lr_fraction),
        size_key("e2e.epochs", &P::e2e, &StageSchedule::epochs),
        real_key("e2e.learning_rate", &P::e2e, &StageSchedule::learning_rate),
        size_key("e2e.batch_size", &P::e2e, &StageSchedule::batch_size),
        real_key("e2e.final_lr_fraction", &P::e2e, &StageSchedule::final_lr_fraction),
        size_key("ibp.iterations", &P::ibp, &IbpConfig::iterations),
        real_key("ibp.step", &P::ibp, &IbpConfig::step),
        size_key("btv.iterations", &P::btv, &BtvConfig::iterations),
        real_key("btv.step", &P::btv, &BtvConfig::step),
        real_key("btv.reg_weight", &P::btv, &BtvConfig::reg_weight),
        int_key("btv.radius", &P::btv, &BtvConfig::radius),
        real_key("btv.alpha", &P::btv, &BtvConfig::alpha),
        size_key("sliding.num_estimates", &P::sliding, &SlidingConfig::num_estimates),
    };
    b.push_back({"adam.beta1", [](P& c, const std::string& v) { c.train.adam.beta1 = to_double("adam.beta1", v); },
                 [](const P& c) { return format_double(c.train.adam.beta1); }});
    b.push_back({"adam.beta2", [](P& c, const std::string& v) { c.train.adam.beta2 = to_double("adam.beta2", v); },
                 [](const P& c) { return format_double(c.train.adam.beta2); }});
    b.push_back({"adam.eps", [](P& c, const std::string& v) { c.train.adam.eps = to_double("adam.eps", v); },
                 [](const P& c) { return format_double(c.train.adam.eps); }});
    b.push_back({"baseline.blur_sigma",
                 [](P& c, const std::string& v) { c.baseline_blur_sigma = to_double("baseline.blur_sigma", v); },
                 [](const P& c) { return format_double(c.baseline_blur_sigma); }});
    b.push_back({"model.mask_shift_rule",
                 [](P& c, const std::string& v) {
                   if (v == "centroid") {
                     c.model.mask_shift_rule = MaskShiftRule::Centroid;
                   } else if (v == "argmax") {
                     c.model.mask_shift_rule = MaskShiftRule::Argmax;
                   } else {
                     throw ConfigError("model.mask_shift_rule must be centroid or argmax, got '" + v + "'");
                   }
                 },
                 [](const P& c) {
                   return std::string(c.model.mask_shift_rule == MaskShiftRule::Centroid ? "centroid" : "argmax");
                 }});
    b.push_back({"ibp.conjugate",
                 [](P& c, const std::string& v) { c.ibp.conjugate = to_bool("ibp.conjugate", v); },
                 [](const P& c) { return std::string(c.ibp.conjugate ? "true" : "false"); }});
    b.push_back({"train.use_regnet",
                 [](P& c, const std::string& v) { c.train.use_regnet = to_bool("train.use_regnet", v); },
                 [](const P& c) { return std::string(c.train.use_regnet ? "true" : "false"); }});
    return b;
  }();
  return all;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile out;
  std::istringstream is(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (out.has(key)) throw ConfigError(where + ": duplicate key " + key);
    out.values_[key] = value;
  }
  if (!out.has("version")) throw ConfigError(origin + ": missing version field");
  if (out.values_.at("version") != std::to_string(kConfigVersion)) {
    throw ConfigError(origin + ": unsupported config version " + out.values_.at("version"));
  }
  return out;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

std::string ConfigFile::text() const {
  std::string out = "version = " + values_.at("version") + "\n";
  for (const auto& [k, v] : values_) {
    if (k != "version") out += k + " = " + v + "\n";
  }
  return out;
}

void ConfigFile::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write config " + path.string());
  os << text();
}

TrainConfig PipelineConfig::stage_config(Stage stage) const {
  TrainConfig t = train;
  t.stage = stage;
  const StageSchedule& s = stage == Stage::SisrPretrain ? sisr : stage == Stage::RegnetPretrain ? regnet : e2e;
  t.epochs = s.epochs;
  t.adam.learning_rate = s.learning_rate;
  t.batch_size = s.batch_size;
  t.final_lr_fraction = s.final_lr_fraction;
  return t;
}

void PipelineConfig::validate() const {
  degradation.validate();
  patches.validate(degradation.r);
  model.validate();
  for (Stage s : {Stage::SisrPretrain, Stage::RegnetPretrain, Stage::EndToEnd}) stage_config(s).validate();
  sliding.validate();
  if (data.scenes == 0) throw ConfigError("data.scenes must be positive");
  if (data.hr_size == 0 || data.hr_size % degradation.r != 0) {
    throw ConfigError("data.hr_size " + std::to_string(data.hr_size) + " must be a positive multiple of degrade.r");
  }
  if (data.val_fraction < 0.0 || data.test_fraction < 0.0 || data.val_fraction + data.test_fraction >= 1.0) {
    throw ConfigError("data.val_fraction + data.test_fraction must be below 1");
  }
  if (model.r != degradation.r) throw ConfigError("model.r must equal degrade.r");
  if (patches.min_images != model.n_images) throw ConfigError("patch.min_images must equal model.n_images");
  if (degradation.n_images < model.n_images) throw ConfigError("degrade.n_images must be at least model.n_images");
  if (ibp.step <= 0.0 || btv.step <= 0.0 || btv.reg_weight < 0.0 || btv.radius < 0 || btv.alpha <= 0.0) {
    throw ConfigError("invalid IBP/BTV settings");
  }
  if (!(baseline_blur_sigma >= 0.0)) throw ConfigError("baseline.blur_sigma must be non-negative");
}

PipelineConfig pipeline_from(const ConfigFile& file) {
  PipelineConfig c;
  std::map<std::string, const Binding*> by_key;
  for (const auto& b : bindings()) by_key[b.key] = &b;
  for (const auto& [key, value] : file.values()) {
    if (key == "version") continue;
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("unknown config key " + key);
    it->second->read(c, value);
  }
  c.validate();
  return c;
}

ConfigFile to_config_file(const PipelineConfig& config) {
  ConfigFile f = ConfigFile::parse("version = " + std::to_string(kConfigVersion));
  for (const auto& b : bindings()) f.set(b.key, b.write(config));
  return f;
}

std::filesystem::path default_config_path() {
  if (const char* dir = std::getenv(kConfigDirEnv); dir && *dir) return std::filesystem::path(dir) / kDefaultConfigName;
  return std::filesystem::path(DEEPSUM_SOURCE_CONFIG_DIR) / kDefaultConfigName;
}

}  // namespace deepsum
