#include "gminf/targets.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

double log_sum_exp(const Vector& a) {
  const double hi = a.maxCoeff();
  if (!std::isfinite(hi)) return hi;
  return hi + std::log((a.array() - hi).exp().sum());
}

void check_dim(const GmmTarget& t, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != t.dim()) {
    throw ShapeMismatch("gmm: query dimension does not match target");
  }
}

}  // namespace

GmmTarget::GmmTarget(std::vector<GmmComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw InvalidArgument("GmmTarget: at least one component required");
  }
  double total = 0.0;
  const auto dim = components_.front().mean.size();
  for (const auto& c : components_) {
    if (!(c.weight > 0.0 && c.weight <= 1.0)) {
      throw InvalidArgument("GmmTarget: weights must lie in (0, 1]");
    }
    if (!(c.stddev > 0.0)) {
      throw InvalidArgument("GmmTarget: stddev must be positive");
    }
    if (c.mean.size() != dim || dim == 0) {
      throw ShapeMismatch("GmmTarget: component means differ in dimension");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg << "GmmTarget: weights sum to " << total << ", expected 1";
    throw InvalidArgument(msg.str());
  }
}

GmmTarget GmmTarget::ring8() {
  std::vector<GmmComponent> comps;
  for (int k = 0; k < 8; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 8.0;
    Vector mean(2);
    mean << 2.0 * std::cos(angle), 2.0 * std::sin(angle);
    comps.push_back({1.0 / 8.0, mean, 0.02});
  }
  return GmmTarget(std::move(comps));
}

GmmTarget GmmTarget::grid25() {
  std::vector<GmmComponent> comps;
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      Vector mean(2);
      mean << 2.0 * i, 2.0 * j;
      comps.push_back({1.0 / 25.0, mean, 0.05});
    }
  }
  return GmmTarget(std::move(comps));
}

GmmTarget GmmTarget::gauss1() {
  return GmmTarget({{1.0, Vector::Zero(2), 1.0}});
}

GmmTarget GmmTarget::by_name(const std::string& name) {
  if (name == "ring8") return ring8();
  if (name == "grid25") return grid25();
  if (name == "gauss1") return gauss1();
  throw InvalidArgument("unknown target name '" + name + "'");
}

std::size_t GmmTarget::dim() const noexcept {
  return static_cast<std::size_t>(components_.front().mean.size());
}

PointSet GmmTarget::modes() const {
  PointSet out;
  out.reserve(components_.size());
  for (const auto& c : components_) out.push_back(c.mean);
  return out;
}

double GmmTarget::max_stddev() const noexcept {
  double s = 0.0;
  for (const auto& c : components_) s = std::max(s, c.stddev);
  return s;
}

PointSet gmm_sample(const GmmTarget& target, std::size_t n, SeededRng& rng) {
  PointSet out;
  out.reserve(n);
  const auto& comps = target.components();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = comps[0].weight;
    while (u >= acc && k + 1 < comps.size()) acc += comps[++k].weight;
    Vector x = comps[k].mean;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
      x[d] += comps[k].stddev * rng.normal();
    }
    out.push_back(std::move(x));
  }
  return out;
}

Vector gmm_component_log_joint(const GmmTarget& target, const Vector& x) {
  check_dim(target, x);
  const auto& comps = target.components();
  const double d = static_cast<double>(target.dim());
  Vector out(static_cast<Eigen::Index>(comps.size()));
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    const double var = c.stddev * c.stddev;
    out[static_cast<Eigen::Index>(k)] =
        std::log(c.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * var) -
        0.5 * (x - c.mean).squaredNorm() / var;
  }
  return out;
}

double gmm_log_density(const GmmTarget& target, const Vector& x) {
  return log_sum_exp(gmm_component_log_joint(target, x));
}

Vector gmm_component_posterior(const GmmTarget& target, const Vector& x) {
  const Vector joint = gmm_component_log_joint(target, x);
  const double norm = log_sum_exp(joint);
  return (joint.array() - norm).exp().matrix();
}

Vector gmm_score(const GmmTarget& target, const Vector& x) {
  const Vector resp = gmm_component_posterior(target, x);
  Vector out = Vector::Zero(x.size());
  const auto& comps = target.components();
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    out -= resp[static_cast<Eigen::Index>(k)] * (x - c.mean) /
           (c.stddev * c.stddev);
  }
  return out;
}

}  // namespace gminf
