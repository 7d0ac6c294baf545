#pragma once

#include <atomic>
#include <string>

#include "gminf/kernels.hpp"
#include "gminf/numerics.hpp"

namespace gminf {

enum class EstimatorMode { Krr, Kde };

const char* to_string(EstimatorMode mode) noexcept;
EstimatorMode estimator_mode_from_string(const std::string& name);

/// Lower bound on the estimator's density argument before taking the log.
inline constexpr double kDensityFloor = 1e-300;

/// Unnormalized density estimate Σ_i w_i k_ψ(x, x_i) over a fixed basis.
///
/// KRR mode: w = (K + ridge I)⁻¹ 𝟙, the column sums of the regularized inverse
/// kernel matrix. KDE mode: w = 𝟙. The mollifier draws are frozen at fit time
/// so the estimate is a deterministic function of x.
class DensityEstimate {
 public:
  DensityEstimate(PointSet basis, Vector weights, KernelSpec kernel,
                  PointSet eps, double ridge, EstimatorMode mode);
  DensityEstimate(const DensityEstimate& other);
  DensityEstimate& operator=(const DensityEstimate& other);

  const PointSet& basis() const noexcept { return basis_; }
  const Vector& weights() const noexcept { return weights_; }
  const KernelSpec& kernel() const noexcept { return kernel_; }
  const PointSet& eps() const noexcept { return eps_; }
  double ridge() const noexcept { return ridge_; }
  EstimatorMode mode() const noexcept { return mode_; }

  /// Features of basis_j - eps_l, column j * m + l.
  const Eigen::MatrixXd& shifted_features() const noexcept { return shifted_; }

  /// Number of evaluations whose density argument fell below kDensityFloor.
  std::size_t clamp_count() const noexcept { return clamps_.load(); }
  void reset_clamp_count() const noexcept { clamps_.store(0); }
  void record_clamp() const noexcept { clamps_.fetch_add(1); }

 private:
  PointSet basis_;
  Vector weights_;
  KernelSpec kernel_;
  PointSet eps_;
  double ridge_;
  EstimatorMode mode_;
  Eigen::MatrixXd shifted_;
  mutable std::atomic<std::size_t> clamps_{0};
};

/// Solves (K + ridge I) w = 𝟙 with K the symmetrized mollified kernel matrix.
DensityEstimate fit_krr(const PointSet& basis, const KernelSpec& kernel,
                        double ridge, SeededRng& rng);
DensityEstimate fit_krr(const PointSet& basis, const KernelSpec& kernel,
                        double ridge, PointSet eps);

DensityEstimate fit_kde(const PointSet& basis, const KernelSpec& kernel,
                        SeededRng& rng);
DensityEstimate fit_kde(const PointSet& basis, const KernelSpec& kernel,
                        PointSet eps);

/// log(max(Σ_i w_i k_ψ(x, x_i), kDensityFloor)).
double log_density(const DensityEstimate& est, const Vector& x);

/// ∇ₓ of log_density; zero where the floor binds.
Vector grad_log_density(const DensityEstimate& est, const Vector& x);

}  // namespace gminf
