#include "gminf/discrete_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

struct Stepper {
  const MlpNet& decoder;
  const Codebook& cb;
  const ConditionModel& cond;
  const DiscreteFlowConfig& config;
  const DensityEstimate* p_est;

  double objective(const SlottedLatent& s) const {
    return cond_log_likelihood(cond, mlp_forward(decoder, s.concat()));
  }

  /// Latent-space ascent direction for the whole concatenated latent.
  Vector latent_direction(const SlottedLatent& s) const {
    const Vector z = s.concat();
    const Vector x = mlp_forward(decoder, z);
    Vector gx = Vector::Zero(x.size());
    if (config.lambda3 > 0.0 && !cond.is_none()) {
      gx += config.lambda3 * cond_grad(cond, x);
    }
    if (config.lambda2 > 0.0 && p_est) {
      gx += config.lambda2 * grad_log_density(*p_est, x);
    }
    const double clip =
        config.clip_factor * std::max(config.lambda2, config.lambda3);
    const double norm = gx.norm();
    if (clip > 0.0 && norm > clip) gx *= clip / norm;
    return mlp_vjp(decoder, z, gx).grad_input;
  }

  /// Explicit step on the condition term, implicit step on
  /// alpha |z - e|²: z ← (z + g + 2 alpha e) / (1 + 2 alpha).
  void update_slot(SlottedLatent& s, std::size_t slot, const Vector& dir,
                   const Vector& anchor) const {
    const auto d = static_cast<Eigen::Index>(cb.dim());
    const double a2 = 2.0 * config.alpha_reg;
    Vector z = s.slots[slot] + dir.segment(static_cast<Eigen::Index>(slot) * d, d);
    z = (z + a2 * anchor) / (1.0 + a2);
    if (!z.allFinite()) {
      throw NonFiniteUpdate("two_stage_refine: non-finite latent slot");
    }
    s.slots[slot] = std::move(z);
  }

  DiscreteTraceEntry trace(const std::string& stage, std::size_t step,
                           const SlottedLatent& s) const {
    double residual = 0.0;
    for (const auto& z : s.slots) residual += quantize(cb, z).sq_distance;
    return {stage, step, objective(s), config.alpha_reg * residual, residual};
  }
};

}  // namespace

Codebook::Codebook(PointSet entries) : entries_(std::move(entries)) {
  if (entries_.size() < 2) {
    throw InvalidArgument("Codebook: need at least two entries");
  }
  const auto d = entries_.front().size();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].size() != d || d == 0) {
      throw ShapeMismatch("Codebook: entries differ in dimension");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (entries_[i] == entries_[j]) {
        throw InvalidArgument("Codebook: entries must be pairwise distinct");
      }
    }
  }
}

Codebook Codebook::random(std::size_t size, std::size_t dim, SeededRng& rng) {
  return Codebook(gaussian_draws(rng, size, dim, 1.0));
}

std::size_t Codebook::dim() const noexcept {
  return static_cast<std::size_t>(entries_.front().size());
}

Vector SlottedLatent::concat() const {
  if (slots.empty()) return {};
  const auto d = slots.front().size();
  Vector out(d * static_cast<Eigen::Index>(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].size() != d) {
      throw ShapeMismatch("SlottedLatent: slots differ in dimension");
    }
    out.segment(static_cast<Eigen::Index>(i) * d, d) = slots[i];
  }
  return out;
}

SlottedLatent SlottedLatent::split(const Vector& flat, std::size_t slot_dim) {
  const auto d = static_cast<Eigen::Index>(slot_dim);
  if (d == 0 || flat.size() % d != 0) {
    throw ShapeMismatch("SlottedLatent::split: length not a multiple of dim");
  }
  SlottedLatent s;
  for (Eigen::Index k = 0; k < flat.size() / d; ++k) {
    s.slots.emplace_back(flat.segment(k * d, d));
  }
  return s;
}

Quantized quantize(const Codebook& cb, const Vector& z) {
  if (static_cast<std::size_t>(z.size()) != cb.dim()) {
    throw ShapeMismatch("quantize: dimension mismatch");
  }
  Quantized best;
  best.sq_distance = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cb.size(); ++j) {
    const double d2 = (z - cb.entries()[j]).squaredNorm();
    if (d2 < best.sq_distance) {
      best.index = j;
      best.sq_distance = d2;
    }
  }
  best.entry = cb.entries()[best.index];
  return best;
}

SlottedLatent quantize_all(const Codebook& cb, const SlottedLatent& s) {
  SlottedLatent out;
  for (const auto& z : s.slots) out.slots.push_back(quantize(cb, z).entry);
  return out;
}

double reg_value(const Codebook& cb, const SlottedLatent& s, double alpha) {
  double total = 0.0;
  for (const auto& z : s.slots) total += quantize(cb, z).sq_distance;
  return alpha * total;
}

PointSet reg_grad(const Codebook& cb, const SlottedLatent& s, double alpha) {
  PointSet out;
  out.reserve(s.slots.size());
  for (const auto& z : s.slots) {
    out.push_back(2.0 * alpha * (z - quantize(cb, z).entry));
  }
  return out;
}

void DiscreteFlowConfig::validate() const {
  if (!(alpha_reg >= 0.0)) throw InvalidArgument("discrete: alpha_reg >= 0");
  if (!(lambda2 >= 0.0 && lambda3 >= 0.0)) {
    throw InvalidArgument("discrete: step sizes must be non-negative");
  }
  if (!(clip_factor > 0.0)) throw InvalidArgument("discrete: clip_factor > 0");
  if (slots < 1) throw InvalidArgument("discrete: need at least one slot");
}

DiscreteResult two_stage_refine(const MlpNet& decoder, const Codebook& cb,
                                const ConditionModel& cond,
                                const DiscreteFlowConfig& config,
                                SeededRng& rng, const DensityEstimate* p_est) {
  config.validate();
  if (decoder.input_dim() != config.slots * cb.dim()) {
    throw ShapeMismatch("two_stage_refine: decoder input != slots * dim");
  }
  cond.validate(decoder.output_dim());
  const Stepper stepper{decoder, cb, cond, config, p_est};

  DiscreteResult result;
  for (std::size_t i = 0; i < config.slots; ++i) {
    result.initial.slots.push_back(
        gaussian_draws(rng, 1, cb.dim(), 1.0).front());
  }

  SlottedLatent work = result.initial;
  SlottedLatent anchors = quantize_all(cb, work);
  result.trace.push_back(stepper.trace("warmup", 0, work));
  for (std::size_t step = 1; step <= config.warmup_steps; ++step) {
    const Vector dir = stepper.latent_direction(work);
    if (config.requantize_each_call) anchors = quantize_all(cb, work);
    for (std::size_t i = 0; i < config.slots; ++i) {
      stepper.update_slot(work, i, dir, anchors.slots[i]);
    }
    result.trace.push_back(stepper.trace("warmup", step, work));
  }
  result.warmup = work;
  result.warmup_quantized = quantize_all(cb, work);
  result.warmup_objective = stepper.objective(result.warmup_quantized);

  // Fine-tune: slot i starts from its warm-up value, everything else sits on
  // its quantized entry; finished slots stay quantized.
  SlottedLatent fixed = result.warmup_quantized;
  for (std::size_t i = 0; i < config.slots; ++i) {
    const std::string stage = "slot:" + std::to_string(i);
    SlottedLatent local = fixed;
    local.slots[i] = result.warmup.slots[i];
    Vector anchor = quantize(cb, local.slots[i]).entry;
    result.trace.push_back(stepper.trace(stage, 0, local));
    for (std::size_t step = 1; step <= config.finetune_steps; ++step) {
      const Vector dir = stepper.latent_direction(local);
      if (config.requantize_each_call) {
        anchor = quantize(cb, local.slots[i]).entry;
      }
      stepper.update_slot(local, i, dir, anchor);
      result.trace.push_back(stepper.trace(stage, step, local));
    }
    fixed.slots[i] = quantize(cb, local.slots[i]).entry;
  }
  result.final = std::move(fixed);
  result.final_objective = stepper.objective(result.final);
  return result;
}

MlpNet train_toy_decoder(const Codebook& cb, const GmmTarget& target,
                         const DecoderTrainConfig& config, SeededRng& rng) {
  if (config.slots < 1 || config.hidden < 1) {
    throw InvalidArgument("train_toy_decoder: slots and hidden must be >= 1");
  }
  if (!(config.learning_rate > 0.0)) {
    throw InvalidArgument("train_toy_decoder: learning rate must be positive");
  }
  const std::size_t dim = cb.dim();
  const std::size_t k = config.slots;
  MlpNet net = MlpNet::random({k * dim, config.hidden, config.hidden, target.dim()},
                              Activation::Tanh, rng);
  if (config.steps == 0) return net;

  std::size_t combos = 1;
  for (std::size_t i = 0; i < k; ++i) combos *= cb.size();
  const PointSet modes = target.modes();
  Eigen::MatrixXd inputs(static_cast<Eigen::Index>(k * dim),
                         static_cast<Eigen::Index>(combos));
  Eigen::MatrixXd outputs(static_cast<Eigen::Index>(target.dim()),
                          static_cast<Eigen::Index>(combos));
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rest = c;
    Vector sum = Vector::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t idx = rest % cb.size();
      rest /= cb.size();
      sum += cb.entries()[idx];
      inputs.col(static_cast<Eigen::Index>(c))
          .segment(static_cast<Eigen::Index>(i * dim), static_cast<Eigen::Index>(dim)) =
          cb.entries()[idx];
    }
    // Mode whose direction best matches the slot sum, so nearby latents map
    // to nearby modes.
    Vector dir = Vector::Zero(static_cast<Eigen::Index>(target.dim()));
    dir.head(std::min<Eigen::Index>(dir.size(), sum.size())) =
        sum.head(std::min<Eigen::Index>(dir.size(), sum.size()));
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const double score = modes[m].dot(dir) / std::max(modes[m].norm(), 1e-12);
      if (score > best_score) {
        best_score = score;
        best = m;
      }
    }
    outputs.col(static_cast<Eigen::Index>(c)) = modes[best];
  }

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.beta1 = 0.9;
  AdamState adam(net, adam_cfg);
  const double scale = 1.0 / static_cast<double>(combos);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Eigen::MatrixXd residual = mlp_forward_batch(net, inputs) - outputs;
    MlpBatchVjp g = mlp_vjp_batch(net, inputs, residual * scale);
    adam.step(net, g.grad_params);
  }
  return net;
}

}  // namespace gminf
