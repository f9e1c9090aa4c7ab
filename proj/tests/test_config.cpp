// Config files: syntax, versioning, typed round trip, stage schedules, and
// the run manifest record.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "deepsum/config.hpp"
#include "deepsum/errors.hpp"
#include "deepsum/run_manifest.hpp"

using namespace deepsum;

TEST(ConfigFile, ParsesCommentsAndWhitespace) {
  const ConfigFile f = ConfigFile::parse("# header\nversion = 1\n\n  model.features=16   # inline\n");
  EXPECT_EQ(f.values().at("model.features"), "16");
  EXPECT_EQ(f.values().size(), 2u);
}

TEST(ConfigFile, RejectsMalformedInput) {
  EXPECT_THROW(ConfigFile::parse("model.features = 16\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("version = 2\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("version = 1\nno equals sign\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("version = 1\n = 3\n"), ConfigError);
  EXPECT_THROW(ConfigFile::parse("version = 1\na = 1\na = 2\n"), ConfigError);
}

TEST(PipelineConfig, UnknownKeyAndBadValuesAreConfigErrors) {
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\nmodel.featurez = 3\n")), ConfigError);
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\nmodel.features = -3\n")), ConfigError);
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\nsisr.learning_rate = fast\n")), ConfigError);
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\ntrain.use_regnet = maybe\n")), ConfigError);
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\nmodel.mask_shift_rule = mode\n")), ConfigError);
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\ndata.hr_size = 50\n")), ConfigError);
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\nmodel.r = 4\n")), ConfigError);
  EXPECT_THROW(pipeline_from(ConfigFile::parse("version = 1\ne2e.epochs = 0\n")), ConfigError);
}

TEST(PipelineConfig, MissingKeysKeepDefaults) {
  const PipelineConfig c = pipeline_from(ConfigFile::parse("version = 1\n"));
  const PipelineConfig d;
  EXPECT_EQ(c.model.features, d.model.features);
  EXPECT_EQ(c.e2e.epochs, d.e2e.epochs);
  EXPECT_EQ(c.degradation.seed, d.degradation.seed);
}

TEST(PipelineConfig, RoundTripsEveryKey) {
  PipelineConfig c;
  c.model.features = 16;
  c.model.mask_shift_rule = MaskShiftRule::Argmax;
  c.train.use_regnet = false;
  c.train.adam.beta2 = 0.995;
  c.regnet.learning_rate = 3e-3;
  c.regnet.final_lr_fraction = 0.05;
  c.degradation.noise_sigma = 12.345678901234567;
  c.btv.radius = 3;
  c.sliding.num_estimates = 4;
  const ConfigFile f = to_config_file(c);
  const PipelineConfig back = pipeline_from(ConfigFile::parse(f.text()));
  EXPECT_EQ(to_config_file(back).text(), f.text());
  EXPECT_EQ(back.degradation.noise_sigma, c.degradation.noise_sigma);
  EXPECT_EQ(back.model.mask_shift_rule, MaskShiftRule::Argmax);
  EXPECT_FALSE(back.train.use_regnet);
}

TEST(PipelineConfig, StageConfigAppliesSchedule) {
  PipelineConfig c;
  c.sisr = {7, 1e-3, 4, 1.0};
  c.regnet = {9, 3e-3, 1, 0.1};
  c.train.seed = 42;
  const TrainConfig s = c.stage_config(Stage::SisrPretrain);
  EXPECT_EQ(s.stage, Stage::SisrPretrain);
  EXPECT_EQ(s.epochs, 7u);
  EXPECT_EQ(s.adam.learning_rate, 1e-3);
  EXPECT_EQ(s.batch_size, 4u);
  EXPECT_EQ(s.seed, 42u);
  const TrainConfig r = c.stage_config(Stage::RegnetPretrain);
  EXPECT_EQ(r.epochs, 9u);
  EXPECT_EQ(r.batch_size, 1u);
  EXPECT_EQ(r.final_lr_fraction, 0.1);
}

TEST(PipelineConfig, ShippedConfigsLoad) {
  const std::filesystem::path dir = std::filesystem::path(DEEPSUM_TEST_CONFIG_DIR);
  for (const char* name : {"default.cfg", "full_scale.cfg"}) {
    SCOPED_TRACE(name);
    EXPECT_NO_THROW(pipeline_from(ConfigFile::load(dir / name)));
  }
  const PipelineConfig full = pipeline_from(ConfigFile::load(dir / "full_scale.cfg"));
  EXPECT_EQ(full.model.features, 64u);
  EXPECT_EQ(full.model.regnet_first_channels, 128u);
  EXPECT_EQ(full.e2e.learning_rate, 5e-6);
}

TEST(PipelineConfig, DefaultPathHonoursEnvironment) {
  ::setenv(kConfigDirEnv, "/some/dir", 1);
  EXPECT_EQ(default_config_path(), std::filesystem::path("/some/dir") / kDefaultConfigName);
  ::unsetenv(kConfigDirEnv);
  EXPECT_EQ(default_config_path().filename(), kDefaultConfigName);
}

TEST(RunManifest, RoundTripAndStableId) {
  RunManifest m;
  m.command = "train";
  m.arguments = {"--stage", "sisr", "--data", "data dir"};
  m.config_path = "configs/default.cfg";
  m.seed = 17;
  m.inputs = {"data/scenes.txt"};
  m.outputs = {"model/sisr_pretrain.ckpt", "model/sisr_pretrain.log"};
  m.run_id = RunManifest::make_run_id(m.command, m.arguments, "version = 1\n", m.seed);
  m.started = "2024-01-01T00:00:00Z";
  m.finished = "2024-01-01T00:01:00Z";
  const RunManifest back = RunManifest::parse(m.text());
  EXPECT_EQ(back.text(), m.text());
  EXPECT_EQ(back.arguments, m.arguments);
  EXPECT_EQ(m.run_id.size(), 12u);
  EXPECT_EQ(m.run_id, RunManifest::make_run_id("train", m.arguments, "version = 1\n", 17));
  EXPECT_NE(m.run_id, RunManifest::make_run_id("train", m.arguments, "version = 1\n", 18));
}

TEST(RunManifest, TimestampHonoursSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  EXPECT_EQ(RunManifest::now(), "1970-01-02T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(RunManifest::now().size(), 20u);
}

TEST(RunManifest, PathBesideOutput) {
  const auto dir = std::filesystem::temp_directory_path() / "deepsum_manifest_path";
  std::filesystem::create_directories(dir);
  EXPECT_EQ(RunManifest::path_for(dir), dir / "run_manifest.json");
  EXPECT_EQ(RunManifest::path_for(dir / "sr.png"), dir / "sr.png.run_manifest.json");
  std::filesystem::remove_all(dir);
}
