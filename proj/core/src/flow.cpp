#include "gminf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamTarget = 2;
constexpr std::uint64_t kStreamStep = 1000;

ScoreField field_of(const DensityEstimate* est) {
  if (!est) return {};
  return [est](const Vector& x) { return grad_log_density(*est, x); };
}

}  // namespace

Generator Generator::identity(std::size_t dim) {
  if (dim == 0) throw InvalidArgument("Generator: dimension must be >= 1");
  Generator g;
  g.dim_ = dim;
  return g;
}

Generator Generator::mlp(std::shared_ptr<const MlpNet> net) {
  if (!net) throw InvalidArgument("Generator: null network");
  Generator g;
  g.dim_ = net->output_dim();
  g.net_ = std::move(net);
  return g;
}

std::size_t Generator::latent_dim() const noexcept {
  return net_ ? net_->input_dim() : dim_;
}

std::size_t Generator::data_dim() const noexcept { return dim_; }

Vector Generator::generate(const Vector& z) const {
  if (static_cast<std::size_t>(z.size()) != latent_dim()) {
    throw ShapeMismatch("generator: latent dimension mismatch");
  }
  return net_ ? mlp_forward(*net_, z) : z;
}

PointSet Generator::generate(const PointSet& z) const {
  if (z.empty()) return {};
  if (!net_) return z;
  // Per point, so that every x_i equals mlp_forward(g, z_i) bit for bit.
  PointSet x;
  x.reserve(z.size());
  for (const auto& zi : z) x.push_back(generate(zi));
  return x;
}

Vector latent_pullback(const Generator& g, const Vector& z, const Vector& gx) {
  if (static_cast<std::size_t>(gx.size()) != g.data_dim() ||
      static_cast<std::size_t>(z.size()) != g.latent_dim()) {
    throw ShapeMismatch("latent_pullback: shape mismatch");
  }
  if (g.is_identity()) return gx;
  return mlp_vjp(*g.net(), z, gx).grad_input;
}

const char* to_string(FeatureSource f) noexcept {
  return f == FeatureSource::Identity ? "identity" : "discriminator";
}

FeatureSource feature_source_from_string(const std::string& name) {
  if (name == "identity") return FeatureSource::Identity;
  if (name == "discriminator") return FeatureSource::DiscriminatorHidden;
  throw InvalidArgument("unknown feature source '" + name + "'");
}

void FlowConfig::validate() const {
  if (!(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0)) {
    throw InvalidArgument("flow: step sizes must be non-negative");
  }
  if (particles < 1) throw InvalidArgument("flow: need at least one particle");
  if (bandwidth && !(*bandwidth > 0.0)) {
    throw InvalidArgument("flow: bandwidth must be positive");
  }
  mollifier.validate();
  if (!(ridge_q > 0.0) || !(ridge_p > 0.0)) {
    throw InvalidArgument("flow: ridges must be positive");
  }
  if (target_samples < 1) throw InvalidArgument("flow: target_samples >= 1");
  if (!(clip_factor > 0.0)) throw InvalidArgument("flow: clip_factor > 0");
}

double FlowConfig::lambda_max() const noexcept {
  return std::max({lambda1, lambda2, lambda3});
}

ParticleSet flow_step(const ParticleSet& particles, const Generator& g,
                      const DensityEstimate& q_est,
                      const DensityEstimate* p_est,
                      const ConditionModel& cond, const FlowConfig& config,
                      StepStats* stats) {
  return flow_step(particles, g, field_of(&q_est), field_of(p_est), cond,
                   config, stats);
}

ParticleSet flow_step(const ParticleSet& particles, const Generator& g,
                      const ScoreField& q_score, const ScoreField& p_score,
                      const ConditionModel& cond, const FlowConfig& config,
                      StepStats* stats) {
  if (particles.z.size() != particles.x.size()) {
    throw ShapeMismatch("flow_step: z and x counts differ");
  }
  const double clip = config.clip_factor * config.lambda_max();
  StepStats local;
  ParticleSet next;
  next.z.reserve(particles.z.size());
  next.t = particles.t + 1;
  double norm_sum = 0.0;
  for (std::size_t i = 0; i < particles.z.size(); ++i) {
    const Vector& x = particles.x[i];
    Vector gx = Vector::Zero(x.size());
    if (config.lambda1 > 0.0 && q_score) gx -= config.lambda1 * q_score(x);
    if (config.lambda2 > 0.0 && p_score) gx += config.lambda2 * p_score(x);
    if (config.lambda3 > 0.0 && !cond.is_none()) {
      gx += config.lambda3 * cond_grad(cond, x);
    }
    const double norm = gx.norm();
    norm_sum += norm;
    if (norm > clip) {
      gx *= clip / norm;
      ++local.clip_events;
    }
    Vector z = particles.z[i] + latent_pullback(g, particles.z[i], gx);
    if (!z.allFinite()) {
      std::ostringstream msg;
      msg << "flow_step: non-finite latent for particle " << i << " at step "
          << particles.t;
      throw NonFiniteUpdate(msg.str());
    }
    next.z.push_back(std::move(z));
  }
  next.x = g.generate(next.z);
  for (const auto& x : next.x) {
    if (!x.allFinite()) throw NonFiniteUpdate("flow_step: non-finite sample");
  }
  local.grad_norm_mean =
      particles.z.empty() ? 0.0
                          : norm_sum / static_cast<double>(particles.z.size());
  if (stats) *stats = local;
  return next;
}

KernelSpec flow_kernel(const FlowConfig& config,
                       std::shared_ptr<const MlpNet> discriminator,
                       double bandwidth) {
  KernelSpec spec;
  if (config.features == FeatureSource::DiscriminatorHidden) {
    if (!discriminator) {
      throw InvalidArgument("flow: discriminator features need a discriminator");
    }
    const std::size_t layer = discriminator->depth() - 1;
    spec.extractor = FeatureExtractor::mlp_hidden(std::move(discriminator), layer);
  }
  spec.bandwidth = bandwidth;
  spec.mollifier = config.mollifier;
  return spec;
}

RefineResult refine(const Generator& g,
                    std::shared_ptr<const MlpNet> discriminator,
                    const PointSet* target_samples, const ConditionModel& cond,
                    const FlowConfig& config, SeededRng& rng,
                    const MetricContext* metrics,
                    const RefineObserver* observer) {
  config.validate();
  cond.validate(g.data_dim());
  FlowConfig cfg = config;
  if (!target_samples || target_samples->empty()) cfg.lambda2 = 0.0;

  SeededRng init_rng = rng.child(kStreamInit);
  ParticleSet particles;
  particles.z = gaussian_draws(init_rng, cfg.particles, g.latent_dim(), 1.0);
  particles.x = g.generate(particles.z);

  KernelSpec kernel = flow_kernel(cfg, discriminator, 1.0);
  double bandwidth = 1.0;
  if (cfg.bandwidth) {
    bandwidth = *cfg.bandwidth;
  } else if (particles.x.size() >= 2) {
    bandwidth = median_feature_bandwidth(kernel.extractor, particles.x);
  }
  kernel.bandwidth = bandwidth;

  std::optional<MetricContext> frozen;
  if (metrics) {
    frozen = *metrics;
    if (!(frozen->mmd_bandwidth > 0.0)) {
      frozen->mmd_bandwidth = median_bandwidth(particles.x, metrics->reference);
    }
  }
  const double mmd_bandwidth = frozen ? frozen->mmd_bandwidth : 0.0;
  if (observer && observer->on_start) {
    observer->on_start(bandwidth, mmd_bandwidth);
  }

  auto fit = [&](const PointSet& basis, double ridge, SeededRng& stream) {
    return cfg.estimator == EstimatorMode::Krr
               ? fit_krr(basis, kernel, ridge, stream)
               : fit_kde(basis, kernel, stream);
  };

  std::optional<DensityEstimate> p_est;
  if (cfg.lambda2 > 0.0) {
    SeededRng target_rng = rng.child(kStreamTarget);
    kernel.mollifier.sigma = cfg.mollifier.sigma_at(0, cfg.steps);
    p_est.emplace(fit(*target_samples, cfg.ridge_p, target_rng));
  }

  RefineResult result;
  result.bandwidth = bandwidth;
  result.mmd_bandwidth = mmd_bandwidth;
  auto emit = [&](StepMetrics m) {
    if (frozen) m.metrics = evaluate(particles.x, *frozen);
    if (observer && observer->on_step) observer->on_step(m);
    result.trajectory.push_back(std::move(m));
  };
  StepMetrics initial;
  initial.sigma_current = cfg.mollifier.sigma_at(0, cfg.steps);
  emit(initial);

  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const double sigma = cfg.mollifier.sigma_at(t, cfg.steps);
    kernel.mollifier.sigma = sigma;
    SeededRng step_rng = rng.child(kStreamStep + t);
    StepStats stats;
    std::size_t clamp_q = 0;
    if (cfg.lambda1 > 0.0) {
      const DensityEstimate q_est = fit(particles.x, cfg.ridge_q, step_rng);
      particles = flow_step(particles, g, q_est,
                            p_est ? &*p_est : nullptr, cond, cfg, &stats);
      clamp_q = q_est.clamp_count();
    } else {
      particles = flow_step(particles, g, ScoreField{},
                            field_of(p_est ? &*p_est : nullptr), cond, cfg,
                            &stats);
    }
    StepMetrics m;
    m.t = t + 1;
    m.clamp_count_q = clamp_q;
    if (p_est) {
      m.clamp_count_p = p_est->clamp_count();
      p_est->reset_clamp_count();
    }
    m.grad_norm_mean = stats.grad_norm_mean;
    m.clip_events = stats.clip_events;
    m.sigma_current = sigma;
    emit(std::move(m));
  }
  result.final = std::move(particles);
  return result;
}

}  // namespace gminf
