#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "gminf/errors.hpp"
#include "gminf/nets.hpp"
#include "gminf_app/commands.hpp"
#include "gminf_app/config.hpp"

namespace gminf::app {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "gminf_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "gminf");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small run that keeps every command fast.
std::string small_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path path = dir / "run.ini";
  std::ofstream f(path);
  f << "seed = 14\n"
       "[gan]\nsteps = 40\n"
       "[eval]\nreference_samples = 200\n"
       "[refine]\nparticles = 64\nsteps = 3\ntarget_samples = 200\n"
       "mollifier_samples = 8\n"
    << extra;
  return path.string();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> v;
  for (std::string l; std::getline(f, l);) v.push_back(l);
  return v;
}

TEST(Config, RoundTripThroughIni) {
  RunConfig c;
  c.seed = 99;
  set_config_value(c, "refine", "estimator", "kde");
  set_config_value(c, "ablate", "step_sizes", "0.5, 1.5");
  const RunConfig back = parse_config(to_ini(c));
  EXPECT_EQ(to_ini(back), to_ini(c));
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, UnknownKeyNamesTheKey) {
  try {
    parse_config("[refine]\nbogus_key = 1\n");
    FAIL() << "expected ConfigInvalid";
  } catch (const ConfigInvalid& e) {
    EXPECT_NE(std::string(e.what()).find("bogus_key"), std::string::npos);
  }
}

TEST(Config, BadValueRejected) {
  EXPECT_THROW(parse_config("[refine]\nsteps = many\n"), ConfigInvalid);
  EXPECT_THROW(parse_config("[refine]\nestimator = svm\n"), ConfigInvalid);
}

TEST(Cli, BadKeyExitsTwo) {
  const fs::path dir = scratch("badkey");
  const auto cfg = small_config(dir, "[verify]\nnot_a_key = 3\n");
  const auto r = run({"verify", "--config", cfg, "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("not_a_key"), std::string::npos);
}

TEST(Cli, UnknownSubcommandExitsTwo) {
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST(Cli, SingleSigmaGridExitsFour) {
  const fs::path dir = scratch("onesigma");
  const auto cfg = small_config(dir, "[verify]\nsigma_grid = 0.1\n");
  const auto r = run({"verify", "--config", cfg, "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 4);
  const auto status = nlohmann::json::parse(read_text(dir / "o" / "run_status.json"));
  EXPECT_EQ(status["status"], "failed");
  EXPECT_EQ(status["exit_code"], 4);
  EXPECT_TRUE(fs::exists(dir / "o" / "manifest.json"));
}

TEST(Cli, TrainGanZeroStepsPersistsInitialNets) {
  const fs::path dir = scratch("gan0");
  const auto cfg = small_config(dir);
  RunConfig c = load_config(cfg);
  c.gan.steps = 0;
  c.out = (dir / "o").string();
  const auto s = cmd_train_gan(c, c.out);
  EXPECT_EQ(s.result.steps_run, 0u);
  const MlpNet g = load_net((dir / "o" / "generator.bin").string());
  SeededRng probe(5);
  for (int i = 0; i < 10; ++i) {
    Vector z(static_cast<Eigen::Index>(c.gan.latent_dim));
    for (auto& v : z) v = probe.normal();
    EXPECT_EQ(mlp_forward(g, z), mlp_forward(s.result.generator, z));
  }
}

TEST(Cli, TrainGanThenReloadReproducesOutputs) {
  const fs::path dir = scratch("gan");
  const auto cfg = small_config(dir);
  const auto r = run({"train-gan", "--config", cfg, "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"generator.bin", "discriminator.bin", "history.csv",
                        "gan_report.json", "manifest.json", "run_status.json",
                        "effective_config.ini"}) {
    EXPECT_TRUE(fs::exists(dir / "o" / f)) << f;
  }
  const MlpNet a = load_net((dir / "o" / "generator.bin").string());
  const MlpNet b = load_net((dir / "o" / "generator.bin").string());
  SeededRng probe(6);
  for (int i = 0; i < 10; ++i) {
    Vector z(2);
    z << probe.normal(), probe.normal();
    EXPECT_EQ(mlp_forward(a, z), mlp_forward(b, z));
  }
}

TEST(Cli, RefineTrajectoryHasOneLinePerStep) {
  const fs::path dir = scratch("refine");
  const auto cfg = small_config(dir);
  const auto r = run({"refine", "--config", cfg, "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto traj = lines(dir / "o" / "trajectory.jsonl");
  ASSERT_EQ(traj.size(), 4u);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto j = nlohmann::json::parse(traj[i]);
    EXPECT_EQ(j["t"], i);
    EXPECT_EQ(j["seed"], 14);
  }
  EXPECT_TRUE(fs::exists(dir / "o" / "particles.csv"));
  EXPECT_TRUE(fs::exists(dir / "o" / "refine_report.json"));
  const auto status = nlohmann::json::parse(read_text(dir / "o" / "run_status.json"));
  EXPECT_EQ(status["status"], "ok");

  const auto rep = run({"report", (dir / "o" / "trajectory.jsonl").string(),
                        "--csv", (dir / "t.csv").string()});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_FALSE(rep.out.empty());
  EXPECT_GE(lines(dir / "t.csv").size(), 5u);
}

TEST(Cli, EstimatorFlagChangesTrajectory) {
  const fs::path dir = scratch("est");
  const auto cfg = small_config(dir);
  ASSERT_EQ(run({"refine", "--config", cfg, "--estimator", "krr", "--out",
                 (dir / "krr").string()}).code, 0);
  ASSERT_EQ(run({"refine", "--config", cfg, "--estimator", "kde", "--out",
                 (dir / "kde").string()}).code, 0);
  EXPECT_NE(read_text(dir / "krr" / "trajectory.jsonl"),
            read_text(dir / "kde" / "trajectory.jsonl"));
}

TEST(Cli, AblateTwoByTwoGridGivesFourFiniteRows) {
  const fs::path dir = scratch("ablate");
  const auto cfg = small_config(
      dir, "[ablate]\nestimators = krr\nsigmas = 0\nterms = all, q\n"
           "step_sizes = 0.1, 0.3\nsteps = 2\n");
  const auto r = run({"ablate", "--config", cfg, "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = lines(dir / "o" / "ablation.csv");
  while (!rows.empty() && rows.front().rfind("cell,", 0) != 0) rows.erase(rows.begin());
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_NE(rows[i].find(",ok,"), std::string::npos) << rows[i];
    EXPECT_EQ(rows[i].find("nan"), std::string::npos) << rows[i];
    EXPECT_EQ(rows[i].find("inf"), std::string::npos) << rows[i];
  }
}

TEST(Cli, VerifyIsByteIdenticalAcrossRuns) {
  const fs::path dir = scratch("verify");
  const auto cfg = small_config(dir, "[verify]\nmc_samples = 10000\nprobes = 4\n");
  const int a = run({"verify", "--config", cfg, "--out", (dir / "a").string()}).code;
  const int b = run({"verify", "--config", cfg, "--out", (dir / "b").string()}).code;
  ASSERT_TRUE(a == 0 || a == 4) << a;
  EXPECT_EQ(a, b);
  for (const char* f : {"smoothing.json", "krr_limit.json", "gradients.json",
                        "summary.json"}) {
    EXPECT_EQ(read_text(dir / "a" / "reports" / f), read_text(dir / "b" / "reports" / f))
        << f;
  }
}

TEST(Cli, DiscreteWritesTrace) {
  const fs::path dir = scratch("discrete");
  const auto cfg = small_config(dir, "[discrete]\ndecoder_steps = 50\n");
  const auto r = run({"discrete", "--config", cfg, "--out", (dir / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(lines(dir / "o" / "discrete_trace.jsonl").empty());
  EXPECT_TRUE(fs::exists(dir / "o" / "discrete_report.json"));
}

TEST(Cli, BinaryExitCodes) {
  const fs::path dir = scratch("binary");
  const auto cfg = small_config(dir, "[verify]\nnope = 1\n");
  const std::string bin = GMINF_CLI_PATH;
  const std::string cmd = "\"" + bin + "\" refine --config \"" + cfg + "\" --out \"" +
                          (dir / "o").string() + "\" >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
  const int version = std::system(("\"" + bin + "\" --version >/dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(version), 0);
}

}  // namespace
}  // namespace gminf::app
