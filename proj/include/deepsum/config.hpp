#pragma once

// Key = value configuration files. '#' starts a comment; blank lines are
// ignored; every file carries "version = 1". PipelineConfig is the typed
// view used by the command-line tools, with one key per hyperparameter.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "deepsum/baselines.hpp"
#include "deepsum/datagen.hpp"
#include "deepsum/model.hpp"
#include "deepsum/training.hpp"

namespace deepsum {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kConfigDirEnv = "DEEPSUM_CONFIG_DIR";
inline constexpr const char* kDefaultConfigName = "default.cfg";

class ConfigFile {
 public:
  /// Throws ConfigError on syntax errors, duplicate keys, or a missing or
  /// unsupported version.
  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string text() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

struct DataSplit {
  std::size_t scenes = 40;
  std::size_t hr_size = 48;
  double val_fraction = 0.1;
  double test_fraction = 0.25;
};

struct StageSchedule {
  std::size_t epochs = 0;
  double learning_rate = 5e-6;
  std::size_t batch_size = 8;
  double final_lr_fraction = 1.0;
};

struct PipelineConfig {
  DataSplit data;
  DegradationConfig degradation;
  PatchPolicy patches;
  ModelConfig model;
  TrainConfig train;  // shared settings; stage, epochs, learning rate and batch size come from the schedules
  StageSchedule sisr{100, 5e-6, 8, 1.0};
  StageSchedule regnet{100, 5e-6, 8, 1.0};
  StageSchedule e2e{3000, 5e-6, 8, 1.0};
  IbpConfig ibp;
  BtvConfig btv;
  double baseline_blur_sigma = 1.0;
  SlidingConfig sliding;

  /// TrainConfig for a stage with its schedule applied.
  TrainConfig stage_config(Stage stage) const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
PipelineConfig pipeline_from(const ConfigFile& file);
ConfigFile to_config_file(const PipelineConfig& config);

/// $DEEPSUM_CONFIG_DIR/default.cfg when the variable is set, otherwise the
/// configs/ directory of the source tree.
std::filesystem::path default_config_path();

}  // namespace deepsum
