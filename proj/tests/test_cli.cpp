// The deepsum command line, run in process: exit codes, file layout,
// reproducibility and agreement with the library.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "deepsum/config.hpp"
#include "deepsum/pipeline.hpp"
#include "deepsum/run_manifest.hpp"

using namespace deepsum;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return out;
}

const char* kToyConfig = R"(version = 1
data.scenes = 4
data.hr_size = 48
data.val_fraction = 0.25
data.test_fraction = 0.25
degrade.n_images = 10
degrade.n_images_max = 10
degrade.cloud_coverage = 0.05
patch.size_hr = 12
patch.per_scene = 2
model.features = 4
model.regnet_first_channels = 6
model.sisr_layers = 2
model.regnet_2d_layers = 1
model.fusion_layers = 4
train.d = 1
train.validate_every = 1
sisr.epochs = 1
sisr.learning_rate = 0.001
sisr.batch_size = 2
regnet.epochs = 1
regnet.learning_rate = 0.001
regnet.batch_size = 2
e2e.epochs = 1
e2e.learning_rate = 0.001
e2e.batch_size = 2
)";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("deepsum_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    config_ = (dir_ / "toy.cfg").string();
    std::ofstream(config_) << kToyConfig;
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  }
  void TearDown() override {
    ::unsetenv("SOURCE_DATE_EPOCH");
    fs::remove_all(dir_);
  }
  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
  void gen(const std::string& out) {
    const Outcome o = run({"gen-data", "--config", config_, "--out", path(out), "--seed", "11"});
    ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  }

  fs::path dir_;
  std::string config_;
};

}  // namespace

TEST(Cli, UsageErrorsAndHelp) {
  EXPECT_EQ(run({}).code, cli::kExitConfig);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(run({"train", "--stage", "sisr"}).code, cli::kExitConfig);
  const Outcome help = run({"--help"});
  EXPECT_EQ(help.code, cli::kExitOk);
  for (const char* sub : {"gen-data", "train", "infer", "eval", "baseline"}) {
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  }
}

TEST_F(CliTest, ConfigErrorsExitWithConfigCode) {
  Outcome o = run({"gen-data", "--config", config_, "--out", path("d"), "--hr-size", "50"});
  EXPECT_EQ(o.code, cli::kExitConfig);
  EXPECT_NE(o.err.find("hr_size"), std::string::npos) << o.err;
  o = run({"gen-data", "--config", path("missing.cfg"), "--out", path("d")});
  EXPECT_EQ(o.code, cli::kExitConfig);
  std::ofstream(path("bad.cfg")) << "version = 1\nmodel.widthh = 3\n";
  o = run({"gen-data", "--config", path("bad.cfg"), "--out", path("d")});
  EXPECT_EQ(o.code, cli::kExitConfig);
  EXPECT_NE(o.err.find("model.widthh"), std::string::npos);
  o = run({"train", "--stage", "fusion", "--data", path("d"), "--config", config_});
  EXPECT_EQ(o.code, cli::kExitConfig);
}

TEST_F(CliTest, MissingDataExitsWithDataCode) {
  Outcome o = run({"baseline", "--method", "bicubic", "--scene", path("nowhere"), "--out", path("x.png"),
                   "--config", config_});
  EXPECT_EQ(o.code, cli::kExitData) << o.err;
}

TEST_F(CliTest, GenDataIsReproducible) {
  gen("a");
  const auto a = tree(path("a"));
  fs::remove_all(path("a"));
  gen("a");
  EXPECT_EQ(tree(path("a")), a);
  EXPECT_TRUE(a.count("scenes.txt"));
  EXPECT_TRUE(a.count("config.cfg"));
  EXPECT_TRUE(a.count("run_manifest.json"));
  for (const char* f : {"LR000.png", "QM000.png", "HR.png", "SM.png", "truth.txt"}) {
    EXPECT_TRUE(a.count("scene0000/" + std::string(f))) << f;
  }
  const RunManifest m = RunManifest::load(path("a/run_manifest.json"));
  EXPECT_EQ(m.command, "gen-data");
  EXPECT_EQ(m.seed, 11u);
  EXPECT_EQ(m.started, "2023-11-14T22:13:20Z");
}

TEST_F(CliTest, EndToEndNeedsRegnetCheckpoint) {
  gen("data");
  ASSERT_EQ(run({"train", "--stage", "sisr", "--data", path("data"), "--config", config_, "--out", path("m")}).code,
            cli::kExitOk);
  const Outcome o = run({"train", "--stage", "e2e", "--data", path("data"), "--config", config_, "--out", path("m")});
  EXPECT_EQ(o.code, cli::kExitConfig);
  EXPECT_NE(o.err.find("regnet_pretrain"), std::string::npos) << o.err;
}

TEST_F(CliTest, FullPipeline) {
  gen("data");
  for (const char* stage : {"sisr", "regnet", "e2e"}) {
    const Outcome o = run({"train", "--stage", stage, "--data", path("data"), "--config", config_, "--out", path("m")});
    ASSERT_EQ(o.code, cli::kExitOk) << stage << ": " << o.err;
    EXPECT_EQ(o.out.rfind("epoch=0 stage=", 0), 0u) << o.out;
  }
  for (const char* f : {"sisr_pretrain.ckpt", "regnet_pretrain.ckpt", "end_to_end.ckpt", "end_to_end.log",
                        "end_to_end.ckpt.state", "end_to_end.ckpt.run_manifest.json"}) {
    EXPECT_TRUE(fs::exists(path("m/") + f)) << f;
  }
  EXPECT_EQ(read_file(path("m/end_to_end.log")).rfind("epoch=0 stage=end_to_end loss=", 0), 0u);

  // Resume continues the epoch count.
  Outcome o = run({"train", "--stage", "e2e", "--data", path("data"), "--config", config_, "--out", path("m"),
                   "--resume"});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(o.out.rfind("epoch=1 stage=end_to_end", 0), 0u) << o.out;

  o = run({"infer", "--model", path("m/end_to_end.ckpt"), "--scene", path("data"), "--out", path("pred"),
           "--sliding", "2", "--config", config_});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  // Averaging windows changes the estimate of a scene with spare images.
  for (const char* sliding : {"1", "2"}) {
    o = run({"infer", "--model", path("m/end_to_end.ckpt"), "--scene", path("data/scene0003"), "--out",
             path(std::string("s") + sliding + ".png"), "--sliding", sliding, "--config", config_});
    ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  }
  EXPECT_NE(read_file(path("s1.png")), read_file(path("s2.png")));
  o = run({"infer", "--model", path("m/end_to_end.ckpt"), "--scene", path("data/scene0003"), "--out", path("s0.png"),
           "--config", config_});
  EXPECT_EQ(read_file(path("s0.png")), read_file(path("s1.png")));
  o = run({"eval", "--pred", path("pred"), "--truth", path("data"), "--out", path("report.txt"), "--config", config_});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(o.out.rfind("scene=scene0003 mpsnr_db=", 0), 0u) << o.out;
  EXPECT_NE(o.out.find("\nmean scenes=1 mpsnr_db="), std::string::npos) << o.out;
  EXPECT_EQ(read_file(path("report.txt")), o.out);

  // A model built for other widths is a config error naming the shapes.
  std::string other = kToyConfig;
  other.replace(other.find("model.features = 4"), 18, "model.features = 5");
  std::ofstream(path("other.cfg")) << other;
  o = run({"infer", "--model", path("m/end_to_end.ckpt"), "--scene", path("data/scene0003"), "--out", path("x.png"),
           "--config", path("other.cfg")});
  EXPECT_EQ(o.code, cli::kExitConfig);
  EXPECT_NE(o.err.find("sisr/"), std::string::npos) << o.err;
}

TEST_F(CliTest, EvalOfTargetAgainstItselfIsPerfect) {
  gen("data");
  const Outcome o = run({"eval", "--pred", path("data/scene0000/HR.png"), "--truth", path("data/scene0000"),
                         "--config", config_});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_EQ(o.out.rfind("scene=scene0000 mpsnr_db=120.000000 ssim=1.000000 u=1 v=1 b=0.000000", 0), 0u) << o.out;
}

TEST_F(CliTest, BaselineMatchesLibrary) {
  gen("data");
  const PipelineConfig cfg = pipeline_from(ConfigFile::load(config_));
  const Scene scene = load_scene(path("data/scene0002"));
  for (const char* method : {"bicubic", "bicubic-mean", "ibp", "btv"}) {
    const std::string out = path(std::string(method) + ".png");
    const Outcome o = run({"baseline", "--method", method, "--scene", path("data/scene0002"), "--out", out,
                           "--config", config_});
    ASSERT_EQ(o.code, cli::kExitOk) << o.err;
    Image want = run_baseline(parse_baseline(method), scene, cfg);
    for (double& v : want.pixels) v = std::clamp(std::round(v), 0.0, 65535.0);
    EXPECT_EQ(load_png(out).pixels, want.pixels) << method;
  }
  const Outcome o = run({"baseline", "--method", "sisr", "--scene", path("data/scene0002"), "--out", path("s.png"),
                         "--config", config_});
  EXPECT_EQ(o.code, cli::kExitConfig) << o.err;
}
