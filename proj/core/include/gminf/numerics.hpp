#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gminf {

using Vector = Eigen::VectorXd;
using PointSet = std::vector<Vector>;

/// Dense real matrix stored row-major; houses kernel matrices and their
/// regularized inverses.
using DenseMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Seeded random stream with a fixed, platform-independent algorithm:
/// mt19937_64 for raw bits, 53-bit mantissa uniforms, and Box-Muller
/// normals. The standard library distributions are avoided because their
/// output is implementation-defined.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64/u53/box-muller";

  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  double normal();

  /// Independent child stream: seed = splitmix64(parent seed, index).
  SeededRng child(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// Solves A X = B for symmetric positive-definite A via Cholesky with jitter
/// escalation. Throws NotPositiveDefinite when even the largest jitter fails.
DenseMatrix cholesky_solve(const DenseMatrix& a, const DenseMatrix& b);

/// (A + Aᵀ) / 2.
DenseMatrix symmetrize(const DenseMatrix& a);

/// n isotropic zero-mean Gaussian vectors of the given dimension.
PointSet gaussian_draws(SeededRng& rng, std::size_t n, std::size_t dim,
                        double sigma);

double median(std::vector<double> values);

double max_abs(const DenseMatrix& a);

bool all_finite(const Vector& v);

}  // namespace gminf
