#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "gminf/nets.hpp"
#include "gminf/targets.hpp"

namespace gminf {

struct NoCondition {};

/// p(c|x) ∝ exp(d(x)) with d the discriminator's scalar logit.
struct DiscriminatorCondition {
  std::shared_ptr<const MlpNet> discriminator;
};

/// Gaussian observation model on a subset of coordinates:
/// log p(c|x) = -|x[observed] - values|² / (2 tau²).
struct MaskCondition {
  std::vector<std::size_t> observed;
  Vector values;
  double tau = 0.05;
};

/// Tempered mixture-component label: beta * log posterior(component | x).
struct ComponentCondition {
  GmmTarget target;
  std::size_t component = 0;
  double beta = 1.0;
};

/// Source of the log p(c|x) term of the latent update.
class ConditionModel {
 public:
  using Variant = std::variant<NoCondition, DiscriminatorCondition,
                               MaskCondition, ComponentCondition>;

  ConditionModel() = default;
  ConditionModel(Variant v);  // NOLINT(google-explicit-constructor)

  const Variant& variant() const noexcept { return variant_; }
  bool is_none() const noexcept {
    return std::holds_alternative<NoCondition>(variant_);
  }
  const char* name() const noexcept;

  /// Throws InvalidArgument on bad parameters for data dimension `dim`.
  void validate(std::size_t dim) const;

 private:
  Variant variant_;
};

double cond_log_likelihood(const ConditionModel& model, const Vector& x);

Vector cond_grad(const ConditionModel& model, const Vector& x);

}  // namespace gminf
