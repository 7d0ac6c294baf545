#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gminf/discrete_flow.hpp"
#include "gminf/flow.hpp"
#include "gminf/nets.hpp"
#include "gminf/verify.hpp"

namespace gminf::app {

struct EvalSection {
  std::size_t reference_samples = 1000;
  /// Non-positive selects 3x the largest target component stddev.
  double hq_radius = 0.0;
  /// Non-positive selects the median heuristic over samples ∪ reference.
  double mmd_bandwidth = 0.0;
};

struct ConditionSection {
  std::string kind = "none";  // none | discriminator | mask | component
  std::vector<std::size_t> mask_observed{0};
  std::vector<double> mask_values{1.0};
  double mask_tau = 0.05;
  std::size_t component = 0;
  double beta = 1.0;
};

struct RefineSection {
  FlowConfig flow;
  std::string generator = "mlp";  // mlp | identity
  /// Net files from train-gan; empty paths train a GAN in-process from [gan].
  std::string generator_file;
  std::string discriminator_file;
  ConditionSection condition;
};

struct AblateSection {
  std::vector<EstimatorMode> estimators{EstimatorMode::Krr, EstimatorMode::Kde};
  std::vector<double> sigmas{0.0, 0.05};
  std::vector<std::string> terms{"all", "q", "p", "c"};
  std::vector<double> step_sizes{0.1, 0.3, 1.0, 2.0};
  std::vector<std::size_t> steps{10};
  /// Condition used by every cell; the c-only cell needs a non-trivial one.
  std::string condition = "discriminator";
};

struct VerifySection {
  SmoothingConfig smoothing;
  std::vector<double> krr_etas{1.0, 10.0, 100.0, 1000.0};
  std::size_t krr_matrices = 10;
  std::size_t krr_size = 16;
  std::size_t score_samples = 256;
  std::size_t score_probes = 20;
  double score_eta = 1000.0;
  double score_tolerance = 1e-2;
  GradientCheckOptions gradients;
};

struct DiscreteSection {
  DiscreteFlowConfig flow;
  std::size_t codebook_size = 16;
  std::size_t slot_dim = 2;
  std::size_t decoder_hidden = 16;
  std::size_t decoder_steps = 500;
  double decoder_lr = 1e-2;
  std::size_t component = 0;
  double beta = 1.0;
};

/// Fully resolved configuration of a run. Every field has a default; a config
/// file overrides a subset and unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 14;
  std::string out = "out";
  std::string target = "ring8";
  GanTrainConfig gan;
  EvalSection eval;
  RefineSection refine;
  AblateSection ablate;
  VerifySection verify;
  DiscreteSection discrete;

  /// Throws ConfigInvalid naming the offending key.
  void validate() const;
};

/// Parses an INI-style file: `key = value` lines, `[section]` headers, `#`
/// or `;` comments, comma-separated lists.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Applies one `section.key = value` assignment (section empty for globals).
void set_config_value(RunConfig& config, const std::string& section,
                      const std::string& key, const std::string& value);

/// Effective configuration as INI text; parse_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& config);
nlohmann::json to_json(const RunConfig& config);

/// Named seed streams of a run.
enum class Stream : std::uint64_t {
  Gan = 1,
  Reference = 2,
  TargetFit = 3,
  Refine = 4,
  Discrete = 5,
  Smoothing = 6,
  Gradients = 7,
  KrrLimit = 8,
  Scores = 9,
};

SeededRng stream(const RunConfig& config, Stream s);

}  // namespace gminf::app
