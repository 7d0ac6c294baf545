#include <iostream>

#include <CLI11.hpp>

#include "gminf/version.hpp"
#include "gminf_app/commands.hpp"

namespace gminf::app {
namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string estimator;
  std::string generator;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "Run configuration file");
  sub->add_option("--seed", f.seed, "Seed (overrides the config)");
  sub->add_option("--out", f.out, "Output directory (overrides the config)");
  sub->add_option("--estimator", f.estimator, "Score estimator")
      ->check(CLI::IsMember({"krr", "kde"}));
  sub->add_option("--generator", f.generator, "Generator variant")
      ->check(CLI::IsMember({"mlp", "identity"}));
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.out = f.out;
  if (!f.estimator.empty()) set_config_value(c, "refine", "estimator", f.estimator);
  if (!f.generator.empty()) set_config_value(c, "refine", "generator", f.generator);
  c.validate();
  return c;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent refinement of generative models by kernel gradient flow",
               "gminf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonFlags flags;
  auto* train = app.add_subcommand("train-gan", "Train the toy GAN");
  auto* ref = app.add_subcommand("refine", "Refine generator samples");
  auto* abl = app.add_subcommand("ablate", "Run the ablation grid");
  auto* ver = app.add_subcommand("verify", "Run the theorem checks");
  auto* dis = app.add_subcommand("discrete", "Two-stage codebook refinement");
  for (auto* s : {train, ref, abl, ver, dis}) add_common(s, flags);

  auto* rep = app.add_subcommand("report", "Tabulate a trajectory file");
  std::string trajectory;
  std::string csv;
  rep->add_option("trajectory", trajectory, "Trajectory JSONL file")->required();
  rep->add_option("--csv", csv, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (rep->parsed()) {
      cmd_report(trajectory, out, csv);
      return kExitOk;
    }
    const RunConfig config = resolve(flags);
    const fs::path dir = config.out;
    if (train->parsed()) {
      const auto s = cmd_train_gan(config, dir);
      out << "trained " << s.result.steps_run << " steps; mmd "
          << s.final_metrics.mmd << ", modes " << s.final_metrics.modes_covered
          << "\n";
    } else if (ref->parsed()) {
      const auto s = cmd_refine(config, dir);
      const auto& a = *s.result.trajectory.front().metrics;
      const auto& b = *s.result.trajectory.back().metrics;
      out << "mmd " << a.mmd << " -> " << b.mmd << ", modes "
          << a.modes_covered << " -> " << b.modes_covered << "\n";
    } else if (abl->parsed()) {
      const auto cells = cmd_ablate(config, dir);
      std::size_t failed = 0;
      for (const auto& c : cells) failed += c.status != "ok";
      out << cells.size() << " cells, " << failed << " failed\n";
    } else if (ver->parsed()) {
      const auto s = cmd_verify(config, dir);
      out << "smoothing slope median " << s.smoothing.slope_median
          << (s.smoothing.passed() ? " ok" : " FAIL") << "\n"
          << "krr score agreement " << s.score_max_diff
          << (s.score_ok ? " ok" : " FAIL") << "\n"
          << "gradients " << (s.gradients.passed() ? "ok" : "FAIL") << "\n";
      if (!s.passed()) return kExitVerification;
    } else if (dis->parsed()) {
      const auto s = cmd_discrete(config, dir);
      out << "objective warm-up " << s.result.warmup_objective << ", final "
          << s.result.final_objective << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace gminf::app
