#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gminf/conditions.hpp"
#include "gminf/estimators.hpp"
#include "gminf/kernels.hpp"
#include "gminf/metrics.hpp"
#include "gminf/nets.hpp"

namespace gminf {

/// Latent-to-data map. The identity variant runs the flow directly in data
/// space (z ≡ x).
class Generator {
 public:
  static Generator identity(std::size_t dim);
  static Generator mlp(std::shared_ptr<const MlpNet> net);

  bool is_identity() const noexcept { return net_ == nullptr; }
  const MlpNet* net() const noexcept { return net_.get(); }
  std::size_t latent_dim() const noexcept;
  std::size_t data_dim() const noexcept;

  Vector generate(const Vector& z) const;
  PointSet generate(const PointSet& z) const;

 private:
  std::shared_ptr<const MlpNet> net_;
  std::size_t dim_ = 0;
};

/// gxᵀ ∂g/∂z, i.e. a data-space gradient pulled back to the latent space.
Vector latent_pullback(const Generator& g, const Vector& z, const Vector& gx);

struct ParticleSet {
  PointSet z;
  PointSet x;
  std::size_t t = 0;
};

enum class FeatureSource { Identity, DiscriminatorHidden };

const char* to_string(FeatureSource f) noexcept;
FeatureSource feature_source_from_string(const std::string& name);

struct FlowConfig {
  double lambda1 = 0.3;  // entropy term, -∇ log q
  double lambda2 = 0.3;  // data term, ∇ log p
  double lambda3 = 0.3;  // condition term, ∇ log p(c|x)
  std::size_t steps = 10;
  std::size_t particles = 256;
  FeatureSource features = FeatureSource::Identity;
  /// Kernel bandwidth; unset selects the median heuristic, evaluated once on
  /// the initial particles of a run.
  std::optional<double> bandwidth;
  MollifierSpec mollifier{0.05, 16, std::nullopt};
  double ridge_q = 1.0;
  double ridge_p = 1.0;
  EstimatorMode estimator = EstimatorMode::Krr;
  std::size_t target_samples = 256;
  /// Per-particle data-space gradient norm cap, in units of max(λ).
  double clip_factor = 10.0;

  void validate() const;
  double lambda_max() const noexcept;
};

struct StepStats {
  std::size_t clip_events = 0;
  double grad_norm_mean = 0.0;
};

using ScoreField = std::function<Vector(const Vector&)>;

/// One discretized flow step: for every particle
///   gx = -λ1 ∇log q(x) + λ2 ∇log p(x) + λ3 ∇log p(c|x),
/// clipped per particle, pulled back through g and added to z; x is then
/// regenerated from z. `p_est` may be null (no access to data).
ParticleSet flow_step(const ParticleSet& particles, const Generator& g,
                      const DensityEstimate& q_est,
                      const DensityEstimate* p_est,
                      const ConditionModel& cond, const FlowConfig& config,
                      StepStats* stats = nullptr);

/// Same step with arbitrary score fields in place of the estimators. Empty
/// fields contribute nothing.
ParticleSet flow_step(const ParticleSet& particles, const Generator& g,
                      const ScoreField& q_score, const ScoreField& p_score,
                      const ConditionModel& cond, const FlowConfig& config,
                      StepStats* stats = nullptr);

struct StepMetrics {
  std::size_t t = 0;
  std::optional<MetricReport> metrics;
  std::size_t clamp_count_q = 0;
  std::size_t clamp_count_p = 0;
  double grad_norm_mean = 0.0;
  std::size_t clip_events = 0;
  double sigma_current = 0.0;
};

struct RefineResult {
  ParticleSet final;
  std::vector<StepMetrics> trajectory;
  double bandwidth = 0.0;
  /// MMD bandwidth used for every step's metrics (0 without metrics).
  double mmd_bandwidth = 0.0;
};

struct RefineObserver {
  /// Called once the derived bandwidths are known, before any metrics.
  std::function<void(double bandwidth, double mmd_bandwidth)> on_start;
  std::function<void(const StepMetrics&)> on_step;
};

/// Full refinement run: draws z⁰ ~ N(0, I), fits the data-side estimator once
/// when target samples are given, and refits the particle-side estimator at
/// every step with fresh mollifier draws derived from the run seed and step.
/// A median-heuristic MMD bandwidth is resolved once, over the initial
/// particles and the reference set, and reused for every step.
RefineResult refine(const Generator& g,
                    std::shared_ptr<const MlpNet> discriminator,
                    const PointSet* target_samples, const ConditionModel& cond,
                    const FlowConfig& config, SeededRng& rng,
                    const MetricContext* metrics = nullptr,
                    const RefineObserver* observer = nullptr);

/// Kernel spec implied by a flow configuration at a given bandwidth.
KernelSpec flow_kernel(const FlowConfig& config,
                       std::shared_ptr<const MlpNet> discriminator,
                       double bandwidth);

}  // namespace gminf
