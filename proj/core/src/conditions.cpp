#include "gminf/conditions.hpp"

#include <cmath>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

ConditionModel::ConditionModel(Variant v) : variant_(std::move(v)) {}

const char* ConditionModel::name() const noexcept {
  return std::visit(
      Overloaded{[](const NoCondition&) { return "none"; },
                 [](const DiscriminatorCondition&) { return "discriminator"; },
                 [](const MaskCondition&) { return "mask"; },
                 [](const ComponentCondition&) { return "component"; }},
      variant_);
}

void ConditionModel::validate(std::size_t dim) const {
  std::visit(
      Overloaded{
          [](const NoCondition&) {},
          [&](const DiscriminatorCondition& c) {
            if (!c.discriminator) {
              throw InvalidArgument("condition: missing discriminator");
            }
            if (c.discriminator->input_dim() != dim ||
                c.discriminator->output_dim() != 1) {
              throw ShapeMismatch("condition: discriminator must map R^dim to R");
            }
          },
          [&](const MaskCondition& c) {
            if (c.observed.empty()) {
              throw InvalidArgument("condition: mask observes no coordinate");
            }
            if (static_cast<std::size_t>(c.values.size()) != c.observed.size()) {
              throw ShapeMismatch("condition: mask values/indices mismatch");
            }
            for (auto i : c.observed) {
              if (i >= dim) throw InvalidArgument("condition: mask index >= dim");
            }
            if (!(c.tau > 0.0)) throw InvalidArgument("condition: tau must be > 0");
          },
          [&](const ComponentCondition& c) {
            if (c.component >= c.target.size()) {
              throw InvalidArgument("condition: component index out of range");
            }
            if (c.target.dim() != dim) {
              throw ShapeMismatch("condition: target dimension mismatch");
            }
            if (!(c.beta > 0.0)) {
              throw InvalidArgument("condition: beta must be > 0");
            }
          }},
      variant_);
}

double cond_log_likelihood(const ConditionModel& model, const Vector& x) {
  return std::visit(
      Overloaded{
          [](const NoCondition&) { return 0.0; },
          [&](const DiscriminatorCondition& c) {
            return mlp_forward(*c.discriminator, x)[0];
          },
          [&](const MaskCondition& c) {
            double s = 0.0;
            for (std::size_t k = 0; k < c.observed.size(); ++k) {
              const double r = x[static_cast<Eigen::Index>(c.observed[k])] -
                               c.values[static_cast<Eigen::Index>(k)];
              s += r * r;
            }
            return -s / (2.0 * c.tau * c.tau);
          },
          [&](const ComponentCondition& c) {
            const Vector joint = gmm_component_log_joint(c.target, x);
            const double top = joint.maxCoeff();
            const double norm =
                top + std::log((joint.array() - top).exp().sum());
            return c.beta *
                   (joint[static_cast<Eigen::Index>(c.component)] - norm);
          }},
      model.variant());
}

Vector cond_grad(const ConditionModel& model, const Vector& x) {
  return std::visit(
      Overloaded{
          [&](const NoCondition&) -> Vector { return Vector::Zero(x.size()); },
          [&](const DiscriminatorCondition& c) -> Vector {
            return mlp_vjp(*c.discriminator, x, Vector::Ones(1)).grad_input;
          },
          [&](const MaskCondition& c) -> Vector {
            Vector g = Vector::Zero(x.size());
            for (std::size_t k = 0; k < c.observed.size(); ++k) {
              const auto i = static_cast<Eigen::Index>(c.observed[k]);
              g[i] = -(x[i] - c.values[static_cast<Eigen::Index>(k)]) /
                     (c.tau * c.tau);
            }
            return g;
          },
          [&](const ComponentCondition& c) -> Vector {
            // ∇ log posterior_j = score of component j - mixture score.
            const auto& comp = c.target.components()[c.component];
            const Vector own = -(x - comp.mean) / (comp.stddev * comp.stddev);
            return c.beta * (own - gmm_score(c.target, x));
          }},
      model.variant());
}

}  // namespace gminf
