#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gminf/errors.hpp"
#include "gminf/flow.hpp"
#include "gminf_app/config.hpp"

namespace gminf::app {

namespace fs = std::filesystem;

/// Stable process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitVerification = 4,
  kExitIo = 5,
};

int exit_code(ErrorKind kind) noexcept;

/// Per-run bookkeeping: the manifest (written once, before any metric output)
/// and a status file marking success or failure.
class RunRecorder {
 public:
  RunRecorder(fs::path out, std::string command, const RunConfig& config);

  const fs::path& out() const noexcept { return out_; }
  bool manifest_written() const noexcept { return manifest_written_; }

  /// Writes manifest.json with the given derived values. Throws IoFailure on
  /// a second call.
  void write_manifest(const nlohmann::json& derived);

  void add_diagnostic(const std::string& key, double value);

  /// Writes run_status.json with status "ok".
  void finish_ok();
  /// Writes the manifest if still missing, then run_status.json with status
  /// "failed" and the error.
  void finish_failed(ErrorKind kind, const std::string& message);

 private:
  fs::path out_;
  std::string command_;
  const RunConfig& config_;
  bool manifest_written_ = false;
  nlohmann::json diagnostics_ = nlohmann::json::object();
};

/// Everything a refinement run needs, resolved from the configuration.
struct RefineSetup {
  GmmTarget target = GmmTarget::gauss1();
  Generator generator = Generator::identity(2);
  std::shared_ptr<const MlpNet> discriminator;
  PointSet target_samples;
  MetricContext metrics;
};

/// Loads or trains the nets and draws the reference and target samples. A GAN
/// trained in-process is saved under `nets_dir` when it is non-empty.
RefineSetup make_refine_setup(const RunConfig& config,
                              const fs::path& nets_dir = {});

ConditionModel make_condition(const RunConfig& config, const std::string& kind,
                              const RefineSetup& setup);

/// Mode-coverage radius in effect for a target.
double hq_radius(const RunConfig& config, const GmmTarget& target);

// ---------------------------------------------------------------------------
// Subcommands. Each writes its artifacts below `out` and returns a summary.

struct TrainGanSummary {
  GanResult result;
  MetricReport final_metrics;
};
TrainGanSummary cmd_train_gan(const RunConfig& config, const fs::path& out);

struct RefineSummary {
  RefineResult result;
  ConditionModel condition;
};
RefineSummary cmd_refine(const RunConfig& config, const fs::path& out);

struct AblationCell {
  std::string name;
  EstimatorMode estimator = EstimatorMode::Krr;
  double sigma = 0.0;
  std::string term;
  double step_size = 0.0;
  std::size_t steps = 0;
  std::string status;  // ok | failed
  std::string error;
  std::string flag;    // empty, nonfinite or mmd_regression
  std::optional<MetricReport> initial;
  std::optional<MetricReport> final;
};
std::vector<AblationCell> cmd_ablate(const RunConfig& config,
                                     const fs::path& out);

struct VerifySummary {
  SmoothingReport smoothing;
  std::vector<KrrLimitReport> krr;
  double score_max_diff = 0.0;
  bool score_ok = false;
  GradientReport gradients;
  bool passed() const noexcept;
};
VerifySummary cmd_verify(const RunConfig& config, const fs::path& out);

struct DiscreteSummary {
  DiscreteResult result;
  double initial_residual = 0.0;
  double warmup_residual = 0.0;
  Vector final_point;
  Vector warmup_point;
};
DiscreteSummary cmd_discrete(const RunConfig& config, const fs::path& out);

/// Pretty-prints a trajectory JSONL file as a table on `table` and writes a
/// plot-ready CSV next to it (or to `csv_path` when given).
void cmd_report(const fs::path& trajectory, std::ostream& table,
                const fs::path& csv_path = {});

// ---------------------------------------------------------------------------
// Report helpers shared with the tests.

nlohmann::json step_json(const StepMetrics& m, std::uint64_t seed);
nlohmann::json metric_json(const MetricReport& m);
nlohmann::json krr_score_agreement(const RunConfig& config, double* max_diff);
/// Ridge-to-KDE limit on the configured number of random unit-bandwidth
/// Gaussian kernel matrices.
std::vector<KrrLimitReport> krr_limit_suite(const RunConfig& config);

/// Shortest round-trip decimal form.
std::string format_number(double v);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Entry point used by the executable; returns the exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gminf::app
