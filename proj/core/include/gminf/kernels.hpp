#pragma once

#include <memory>
#include <optional>
#include <span>

#include "gminf/nets.hpp"
#include "gminf/numerics.hpp"

namespace gminf {

/// Feature map d(·) used inside the kernel: either the identity or the
/// activations of a hidden layer of a network (typically the discriminator's
/// last hidden layer).
class FeatureExtractor {
 public:
  static FeatureExtractor identity();
  static FeatureExtractor mlp_hidden(std::shared_ptr<const MlpNet> net,
                                     std::size_t layer);

  bool is_identity() const noexcept { return net_ == nullptr; }
  const MlpNet* net() const noexcept { return net_.get(); }
  std::size_t layer() const noexcept { return layer_; }
  std::size_t output_dim(std::size_t input_dim) const;

  Vector features(const Vector& x) const;
  /// One point per column.
  Eigen::MatrixXd features(const Eigen::MatrixXd& x) const;
  /// J(x)ᵀ u.
  Vector pullback(const Vector& x, const Vector& u) const;

 private:
  std::shared_ptr<const MlpNet> net_;
  std::size_t layer_ = 0;
};

/// Isotropic Gaussian mollifier ψ with Monte-Carlo sample count m and an
/// optional linear anneal of sigma over the flow steps.
struct MollifierSpec {
  double sigma = 0.0;
  std::size_t samples = 1;
  std::optional<double> sigma_final;

  void validate() const;
  /// Sigma at flow step `step` of `total` (linear anneal when configured).
  double sigma_at(std::size_t step, std::size_t total) const;
};

struct KernelSpec {
  FeatureExtractor extractor = FeatureExtractor::identity();
  double bandwidth = 1.0;
  MollifierSpec mollifier;

  void validate() const;
};

/// Mollifier draws for one estimator construction. A zero sigma yields a
/// single zero vector so the estimator reduces to the base kernel exactly.
PointSet mollifier_draws(SeededRng& rng, std::size_t dim, double sigma,
                         std::size_t samples);

/// exp(-|d(x) - d(y)|² / h).
double base_kernel(const KernelSpec& spec, const Vector& x, const Vector& y);

/// (1/m) Σ_l base_kernel(x, y - eps_l).
double mollified_kernel(const KernelSpec& spec, const Vector& x,
                        const Vector& y, std::span<const Vector> eps);

struct KernelGrad {
  Vector grad_x;
  Vector grad_y;
};

KernelGrad mollified_kernel_grad(const KernelSpec& spec, const Vector& x,
                                 const Vector& y, std::span<const Vector> eps);

/// Monte-Carlo kernel matrix before symmetrization: entry (i, j) is
/// mollified_kernel(points[i], points[j], eps).
DenseMatrix kernel_matrix_raw(const KernelSpec& spec, const PointSet& points,
                              std::span<const Vector> eps);

DenseMatrix kernel_matrix(const KernelSpec& spec, const PointSet& points,
                          std::span<const Vector> eps);

/// Features of every shifted point y_j - eps_l, column j * m + l.
Eigen::MatrixXd shifted_features(const FeatureExtractor& extractor,
                                 const PointSet& points,
                                 std::span<const Vector> eps);

/// Median of squared pairwise feature distances.
double median_feature_bandwidth(const FeatureExtractor& extractor,
                                const PointSet& points);

}  // namespace gminf
