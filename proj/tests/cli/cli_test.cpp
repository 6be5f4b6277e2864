#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "config.hpp"

namespace nnsb::cli {
namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nnsb_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Small shapes run so each subcommand takes well under a second.
  int nnsb(const std::string& cmd, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"nnsb",  cmd,
                                  "--out", dir_.string(),
                                  "--set", "data.n_samples=800",
                                  "--set", "vae.epochs=3",
                                  "--set", "stage2.epochs=2",
                                  "--set", "stage2.batch_size=128",
                                  "--set", "eval.epochs=2",
                                  "--set", "eval.noise_ratios=0,0.4"};
    args.insert(args.end(), extra.begin(), extra.end());
    std::vector<char*> argv;
    for (std::string& a : args) argv.push_back(a.data());
    return run(static_cast<int>(argv.size()), argv.data());
  }

  fs::path dir_;
};

TEST_F(Cli, HappyPathProducesTradeoffReport) {
  ASSERT_EQ(nnsb("gen-data"), kExitOk);
  ASSERT_EQ(nnsb("train-vae"), kExitOk);
  ASSERT_EQ(nnsb("train-encoder"), kExitOk);
  ASSERT_EQ(nnsb("evaluate"), kExitOk);
  const std::string summary = read_file(dir_ / "summary.csv");
  EXPECT_EQ(summary.rfind("variant,sensitive_best,sensitive_final,target_best,target_final,gap,mi_bound\n", 0), 0u);
  for (const char* v : {"\nraw,", "\nx_prime,", "\nz_enc,", "\nvae_only,"}) EXPECT_NE(summary.find(v), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "metrics.csv.manifest.json"));
  const std::string manifest = read_file(dir_ / "pipeline.ckpt.manifest.json");
  for (const char* key : {"\"config_fingerprint\"", "\"seed\"", "\"versions\"", "\"wall_time_seconds\"", "\"config\""})
    EXPECT_NE(manifest.find(key), std::string::npos) << key;
}

TEST_F(Cli, EvaluateTwiceIsByteIdentical) {
  ASSERT_EQ(nnsb("gen-data"), kExitOk);
  ASSERT_EQ(nnsb("train-vae"), kExitOk);
  ASSERT_EQ(nnsb("train-encoder"), kExitOk);
  const std::string ckpt = read_file(dir_ / "pipeline.ckpt");
  ASSERT_EQ(nnsb("evaluate"), kExitOk);
  const std::string first = read_file(dir_ / "metrics.csv");
  ASSERT_EQ(nnsb("evaluate"), kExitOk);
  EXPECT_EQ(read_file(dir_ / "metrics.csv"), first);
  ASSERT_EQ(nnsb("train-encoder"), kExitOk);
  EXPECT_EQ(read_file(dir_ / "pipeline.ckpt"), ckpt);
}

TEST_F(Cli, EstimateMiNullOnGaussianPair) {
  const std::vector<std::string> gp{"--set", "data.kind=gaussian_pair", "--set", "data.delta=0"};
  ASSERT_EQ(nnsb("gen-data", gp), kExitOk);
  ::testing::internal::CaptureStdout();
  const int code = nnsb("estimate-mi", gp);
  const std::string out = ::testing::internal::GetCapturedStdout();
  ASSERT_EQ(code, kExitOk);
  const auto pos = out.find("mi total = ");
  ASSERT_NE(pos, std::string::npos) << out;
  const double mi = std::stod(out.substr(pos + 11));
  EXPECT_GE(mi, -0.05);
  EXPECT_LE(mi, 0.05);
}

TEST_F(Cli, MissingUpstreamArtifactIsDependencyError) {
  EXPECT_EQ(nnsb("train-vae"), kExitDependency);
  ASSERT_EQ(nnsb("gen-data"), kExitOk);
  EXPECT_EQ(nnsb("train-encoder"), kExitDependency);
  EXPECT_EQ(nnsb("evaluate"), kExitDependency);
}

TEST_F(Cli, StaleCheckpointIsDependencyError) {
  ASSERT_EQ(nnsb("gen-data"), kExitOk);
  ASSERT_EQ(nnsb("train-vae"), kExitOk);
  EXPECT_EQ(nnsb("train-encoder", {"--set", "vae.beta_kl=0.5"}), kExitDependency);
  // Evaluation settings do not invalidate trained stages.
  ASSERT_EQ(nnsb("train-encoder"), kExitOk);
  EXPECT_EQ(nnsb("evaluate", {"--set", "eval.epochs=1"}), kExitOk);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(nnsb("gen-data", {"--set", "vae.beta_kl=abc"}), kExitConfig);
  EXPECT_EQ(nnsb("gen-data", {"--set", "vae.nope=1"}), kExitConfig);
  EXPECT_EQ(nnsb("gen-data", {"--set", "vae.beta_kl=-1"}), kExitConfig);
  EXPECT_EQ(nnsb("gen-data", {"--set", "missing_equals"}), kExitConfig);
  EXPECT_EQ(nnsb("gen-data", {"--bogus-flag"}), kExitConfig);
  EXPECT_EQ(nnsb("estimate-mi", {"--source", "pixels"}), kExitConfig);
}

TEST(Config, DefaultsAreValidAndCanonicalTextRoundTrips) {
  const Config cfg = parse_config("", {});
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.vae.latent_dim, 8u);
  const std::string text = canonical_text(cfg);
  EXPECT_EQ(canonical_text(parse_config(text, {})), text);
}

TEST(Config, ShippedConfigsMatchTheDefaults) {
  const fs::path dir = NNSB_CONFIG_DIR;
  for (const char* name : {"shapes.ini", "gaussian_pair.ini"}) {
    SCOPED_TRACE(name);
    // The files differ from the defaults only in data.kind and paths.out.
    const Config cfg = load_config(dir / name, {"paths.out=nnsb_run", "data.kind=shapes"});
    EXPECT_EQ(canonical_text(cfg), canonical_text(parse_config("", {})));
  }
}

TEST(Config, IniSectionsAndOverridesApplyInOrder) {
  const std::string ini =
      "[run]\nseed = 5\n\n[vae]\nlatent_dim = 4\nencoder_hidden = 32, 16\n\n[stage2]\nm_values = 3,6\n"
      "sample_latents = false\n";
  const Config cfg = parse_config(ini, {"vae.latent_dim=6", "run.seed=9"});
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.shapes.seed, 9u);
  EXPECT_EQ(cfg.eval.seed, 9u);
  EXPECT_EQ(cfg.vae.latent_dim, 6u);
  EXPECT_EQ(cfg.vae.encoder_hidden, (std::vector<std::size_t>{32, 16}));
  EXPECT_EQ(cfg.stage2.spec.m_values, (std::vector<int>{3, 6}));
  EXPECT_FALSE(cfg.stage2.sample_latents);
}

TEST(Config, OverridesApplyBeforeValidation) {
  // An invalid file value repaired by an override is accepted.
  EXPECT_THROW(parse_config("[vae]\nbeta_kl = 0\n", {}), ConfigError);
  EXPECT_NO_THROW(parse_config("[vae]\nbeta_kl = 0\n", {"vae.beta_kl=0.01"}));
}

TEST(Config, ErrorsNameTheField) {
  try {
    parse_config("[stage2]\nwindow = ten\n", {});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stage2.window"), std::string::npos) << e.what();
  }
  try {
    parse_config("", {"eval.mi_smoothing=boxcar"});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("[eval]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("[data]\nkind = mnist\n", {}), ConfigError);
  EXPECT_THROW(parse_config("[nosuch]\nkey = 1\n", {}), ConfigError);
  EXPECT_THROW(parse_config("[eval]\nnoise_ratios = 0.2,1.5\n", {}), ConfigError);
}

TEST(Config, StageFingerprintsCoverOnlyUpstreamSections) {
  const Config a = parse_config("", {});
  const Config b = parse_config("", {"eval.epochs=3"});
  const Config c = parse_config("", {"stage2.proximity_weight=2"});
  const Config d = parse_config("", {"vae.beta_kl=0.1"});
  EXPECT_EQ(stage_fingerprint(a, "encoder"), stage_fingerprint(b, "encoder"));
  EXPECT_NE(stage_fingerprint(a, "encoder"), stage_fingerprint(c, "encoder"));
  EXPECT_EQ(stage_fingerprint(a, "vae"), stage_fingerprint(c, "vae"));
  EXPECT_NE(stage_fingerprint(a, "vae"), stage_fingerprint(d, "vae"));
  EXPECT_EQ(stage_fingerprint(a, "vae").size(), 64u);
}

}  // namespace
}  // namespace nnsb::cli
