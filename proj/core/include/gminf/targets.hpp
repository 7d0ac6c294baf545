#pragma once

#include <string>
#include <vector>

#include "gminf/numerics.hpp"

namespace gminf {

struct GmmComponent {
  double weight = 1.0;
  Vector mean;
  double stddev = 1.0;  // isotropic
};

/// Isotropic Gaussian mixture with exact density, score and posterior.
/// Plays the role of the ground-truth data distribution in every experiment.
class GmmTarget {
 public:
  explicit GmmTarget(std::vector<GmmComponent> components);

  /// 8 Gaussians on a circle of radius 2, stddev 0.02.
  static GmmTarget ring8();
  /// 5x5 grid with spacing 2 centred at the origin, stddev 0.05.
  static GmmTarget grid25();
  /// Standard 2-D Gaussian.
  static GmmTarget gauss1();
  /// One of "ring8", "grid25", "gauss1".
  static GmmTarget by_name(const std::string& name);

  const std::vector<GmmComponent>& components() const noexcept {
    return components_;
  }
  std::size_t size() const noexcept { return components_.size(); }
  std::size_t dim() const noexcept;
  PointSet modes() const;
  double max_stddev() const noexcept;

 private:
  std::vector<GmmComponent> components_;
};

PointSet gmm_sample(const GmmTarget& target, std::size_t n, SeededRng& rng);

double gmm_log_density(const GmmTarget& target, const Vector& x);

Vector gmm_score(const GmmTarget& target, const Vector& x);

Vector gmm_component_posterior(const GmmTarget& target, const Vector& x);

/// log(weight_j) + log N(x; mean_j, stddev_j² I) for every component.
Vector gmm_component_log_joint(const GmmTarget& target, const Vector& x);

}  // namespace gminf
