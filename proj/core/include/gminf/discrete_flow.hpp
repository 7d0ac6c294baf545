#pragma once

#include <string>
#include <vector>

#include "gminf/conditions.hpp"
#include "gminf/estimators.hpp"
#include "gminf/nets.hpp"
#include "gminf/targets.hpp"

namespace gminf {

/// Finite dictionary of slot vectors; latent slots are finally snapped onto
/// its entries.
class Codebook {
 public:
  explicit Codebook(PointSet entries);
  /// `size` entries drawn i.i.d. from N(0, I).
  static Codebook random(std::size_t size, std::size_t dim, SeededRng& rng);

  const PointSet& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t dim() const noexcept;

 private:
  PointSet entries_;
};

struct SlottedLatent {
  PointSet slots;

  Vector concat() const;
  static SlottedLatent split(const Vector& flat, std::size_t slot_dim);
};

struct Quantized {
  std::size_t index = 0;
  Vector entry;
  double sq_distance = 0.0;
};

/// Nearest entry by squared distance; ties go to the lowest index.
Quantized quantize(const Codebook& cb, const Vector& z);

SlottedLatent quantize_all(const Codebook& cb, const SlottedLatent& s);

/// alpha Σ_i |z_i - e_i|² with e_i the nearest entry of slot i.
double reg_value(const Codebook& cb, const SlottedLatent& s, double alpha);

/// 2 alpha (z_i - e_i) per slot, re-quantizing every call.
PointSet reg_grad(const Codebook& cb, const SlottedLatent& s, double alpha);

struct DiscreteFlowConfig {
  /// Weight of the codebook-attraction regularizer.
  double alpha_reg = 1.0;
  std::size_t warmup_steps = 20;
  /// Continuous steps per slot in the fine-tune stage.
  std::size_t finetune_steps = 10;
  double lambda2 = 0.0;
  double lambda3 = 0.3;
  double clip_factor = 10.0;
  /// When false the attraction targets are frozen at the start of each stage.
  bool requantize_each_call = true;
  /// Number of latent slots; the decoder input is slots * codebook dim.
  std::size_t slots = 2;

  void validate() const;
};

struct DiscreteTraceEntry {
  std::string stage;  // "warmup" or "slot:<i>"
  std::size_t step = 0;
  double objective = 0.0;  // log p(c | decoder(z)) on the working latent
  double reg = 0.0;
  double residual = 0.0;   // Σ_i |z_i - e_i|²
};

struct DiscreteResult {
  SlottedLatent initial;
  SlottedLatent warmup;            // continuous latent after the warm-up
  SlottedLatent warmup_quantized;  // warm-up followed by direct quantization
  SlottedLatent final;             // fully quantized after fine-tuning
  double warmup_objective = 0.0;   // objective of warmup_quantized
  double final_objective = 0.0;
  std::vector<DiscreteTraceEntry> trace;
};

/// Warm-up: all slots move jointly under the condition gradient (and the
/// data-score gradient when `p_est` is given) with the regularizer applied as
/// an implicit step. Fine-tune: slots in ascending order are updated alone
/// with the others frozen at their quantized values, then hard-quantized.
DiscreteResult two_stage_refine(const MlpNet& decoder, const Codebook& cb,
                                const ConditionModel& cond,
                                const DiscreteFlowConfig& config,
                                SeededRng& rng,
                                const DensityEstimate* p_est = nullptr);

struct DecoderTrainConfig {
  std::size_t slots = 2;
  std::size_t hidden = 16;
  std::size_t steps = 500;
  double learning_rate = 1e-2;
};

/// Toy decoder for the discrete scheme: a tanh MLP regressed, full batch,
/// from every concatenation of codebook entries onto the target mode whose
/// direction best matches the sum of the entries. Zero steps returns the
/// random initialization.
MlpNet train_toy_decoder(const Codebook& cb, const GmmTarget& target,
                         const DecoderTrainConfig& config, SeededRng& rng);

}  // namespace gminf
