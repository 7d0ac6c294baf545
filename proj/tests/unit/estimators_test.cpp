#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "gminf/errors.hpp"
#include "gminf/estimators.hpp"
#include "gminf/verify.hpp"

namespace gminf {
namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

KernelSpec spec(double h, double sigma = 0.0, std::size_t m = 1) {
  KernelSpec s;
  s.bandwidth = h;
  s.mollifier.sigma = sigma;
  s.mollifier.samples = m;
  return s;
}

const PointSet kNoEps{Vector::Zero(2)};

TEST(FitKrr, ScalarSolve) {
  const DensityEstimate e = fit_krr({v2(1, 1)}, spec(1.0), 1.0, kNoEps);
  ASSERT_EQ(e.weights().size(), 1);
  EXPECT_DOUBLE_EQ(e.weights()[0], 0.5);
}

TEST(FitKrr, LargeRidgeApproachesUniform) {
  SeededRng rng(1);
  const PointSet pts = gaussian_draws(rng, 16, 2, 1.0);
  const double ridge = 1e3;
  const DensityEstimate e = fit_krr(pts, spec(1.0), ridge, kNoEps);
  for (Eigen::Index i = 0; i < e.weights().size(); ++i) {
    EXPECT_NEAR(e.weights()[i] * ridge, 1.0, 0.02);
  }
}

TEST(FitKrr, MatchesDenseInverse) {
  SeededRng rng(2);
  const PointSet pts = gaussian_draws(rng, 8, 2, 1.0);
  const KernelSpec s = spec(1.5, 0.1, 8);
  SeededRng erng(3);
  const PointSet eps = mollifier_draws(erng, 2, 0.1, 8);
  const DensityEstimate e = fit_krr(pts, s, 0.7, eps);
  const DenseMatrix k = kernel_matrix(s, pts, eps);
  const Vector oracle =
      (k + 0.7 * DenseMatrix::Identity(8, 8)).inverse() * Vector::Ones(8);
  EXPECT_LT((e.weights() - oracle).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitKrr, WeightGapShrinksWithRidge) {
  SeededRng rng(4);
  const PointSet pts = gaussian_draws(rng, 16, 2, 1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double eta : {1.0, 10.0, 100.0, 1000.0}) {
    const DensityEstimate e = fit_krr(pts, spec(1.0), eta, kNoEps);
    const double gap = (e.weights() - Vector::Constant(16, 1.0 / eta)).norm();
    EXPECT_LE(gap, prev);
    prev = gap;
  }
}

TEST(FitKrr, RejectsBadRidgeAndEmptyBasis) {
  EXPECT_THROW(fit_krr({v2(0, 0)}, spec(1.0), 0.0, kNoEps), InvalidArgument);
  EXPECT_THROW(fit_krr({}, spec(1.0), 1.0, kNoEps), InvalidArgument);
}

TEST(FitKde, UnitWeights) {
  SeededRng rng(5);
  const DensityEstimate e = fit_kde(gaussian_draws(rng, 10, 2, 1.0), spec(1.0), rng);
  EXPECT_EQ(e.weights(), Vector::Ones(10));
  EXPECT_EQ(e.mode(), EstimatorMode::Kde);
}

TEST(FitKde, ScoreAlignsWithGaussian) {
  SeededRng rng(6);
  const PointSet pts = gaussian_draws(rng, 4096, 2, 1.0);
  KernelSpec s = spec(1.0);
  s.bandwidth = median_feature_bandwidth(s.extractor, pts);
  const DensityEstimate e = fit_kde(pts, s, kNoEps);
  std::vector<double> cos;
  int toward = 0;
  SeededRng prng(7);
  for (const auto& x : gaussian_draws(prng, 20, 2, 1.0)) {
    const Vector g = grad_log_density(e, x);
    cos.push_back(g.dot(-x) / (g.norm() * x.norm()));
    toward += g.dot(x) < 0.0 ? 1 : 0;
  }
  EXPECT_GE(median(cos), 0.9);
  EXPECT_GE(toward, 18);
}

TEST(FitKde, KrrConvergesToKdeAtLargeRidge) {
  // Fit size chosen so that the O(row sum / ridge) gap is below the
  // tolerance; at n = 256 with the median bandwidth the gap is ~1.5e-2.
  SeededRng rng(8);
  const PointSet pts = gaussian_draws(rng, 32, 2, 1.0);
  KernelSpec s = spec(1.0);
  s.bandwidth = median_feature_bandwidth(s.extractor, pts);
  const DensityEstimate kde = fit_kde(pts, s, kNoEps);
  const DensityEstimate krr = fit_krr(pts, s, 1e3, kNoEps);
  SeededRng prng(9);
  for (const auto& x : gaussian_draws(prng, 20, 2, 1.0)) {
    EXPECT_LT((grad_log_density(krr, x) - grad_log_density(kde, x)).cwiseAbs().maxCoeff(), 1e-2);
  }
}

TEST(LogDensity, ScalarCase) {
  const DensityEstimate e = fit_krr({v2(2, 1)}, spec(1.0), 1.0, kNoEps);
  EXPECT_NEAR(log_density(e, v2(2, 1)), std::log(0.5), 1e-15);
}

TEST(LogDensity, KdeSelfDominance) {
  const PointSet pts{v2(0, 0), v2(10, 0), v2(0, 10), v2(10, 10)};
  const DensityEstimate e = fit_kde(pts, spec(1.0), kNoEps);
  EXPECT_NEAR(log_density(e, v2(10, 0)), 0.0, 1e-12);
}

TEST(LogDensity, FloorAndClampCounter) {
  // Near-duplicate basis points: the weights stay positive but small, and a
  // far query underflows the kernel sum.
  const PointSet pts{v2(0, 0), v2(1e-6, 0)};
  const DensityEstimate e = fit_krr(pts, spec(1.0), 1e-3, kNoEps);
  EXPECT_GT(e.weights().minCoeff(), 0.0);
  EXPECT_EQ(e.clamp_count(), 0u);
  const double v = log_density(e, v2(100, 0));
  EXPECT_DOUBLE_EQ(v, std::log(kDensityFloor));
  EXPECT_EQ(e.clamp_count(), 1u);
  EXPECT_EQ(grad_log_density(e, v2(100, 0)), Vector::Zero(2));
  e.reset_clamp_count();
  EXPECT_EQ(e.clamp_count(), 0u);
}

TEST(GradLogDensity, StationaryAtSingleBasisPoint) {
  const DensityEstimate e = fit_krr({v2(1, -1)}, spec(1.0), 1.0, kNoEps);
  EXPECT_EQ(grad_log_density(e, v2(1, -1)), Vector::Zero(2));
}

TEST(GradLogDensity, MatchesFiniteDifferences) {
  SeededRng rng(10);
  const PointSet pts = gaussian_draws(rng, 20, 2, 1.0);
  const KernelSpec s = spec(1.1, 0.1, 8);
  for (EstimatorMode mode : {EstimatorMode::Krr, EstimatorMode::Kde}) {
    SeededRng frng(11);
    const DensityEstimate e = mode == EstimatorMode::Krr ? fit_krr(pts, s, 1.0, frng)
                                                         : fit_kde(pts, s, frng);
    for (int t = 0; t < 10; ++t) {
      const Vector x = v2(rng.normal(), rng.normal());
      const Vector fd = finite_difference_gradient(
          [&](const Vector& a) { return log_density(e, a); }, x, 1e-5);
      EXPECT_LT(relative_error(grad_log_density(e, x), fd), 1e-4);
    }
  }
}

TEST(Estimators, PermutationEquivariance) {
  SeededRng rng(12);
  const PointSet pts = gaussian_draws(rng, 10, 2, 1.0);
  std::vector<std::size_t> perm{4, 2, 9, 0, 7, 1, 8, 3, 6, 5};
  PointSet shuffled;
  for (std::size_t p : perm) shuffled.push_back(pts[p]);
  const KernelSpec s = spec(1.0, 0.05, 8);
  SeededRng erng(13);
  const PointSet eps = mollifier_draws(erng, 2, 0.05, 8);
  const DensityEstimate a = fit_krr(pts, s, 1.0, eps);
  const DensityEstimate b = fit_krr(shuffled, s, 1.0, eps);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    EXPECT_NEAR(b.weights()[static_cast<Eigen::Index>(i)],
                a.weights()[static_cast<Eigen::Index>(perm[i])], 1e-10);
  }
  const Vector x = v2(0.3, 0.2);
  EXPECT_NEAR(log_density(a, x), log_density(b, x), 1e-10);
}

TEST(Estimators, ScoreErrorShrinksWithMoreData) {
  SeededRng prng(14);
  const PointSet probes = gaussian_draws(prng, 20, 2, 1.0);
  std::vector<double> errors;
  for (std::size_t n : {256u, 2048u}) {
    SeededRng rng(15);
    const PointSet pts = gaussian_draws(rng, n, 2, 1.0);
    KernelSpec s = spec(0.5);
    const DensityEstimate e = fit_kde(pts, s, kNoEps);
    double err = 0.0;
    for (const auto& x : probes) err += (grad_log_density(e, x) + x).norm();
    errors.push_back(err);
  }
  EXPECT_LT(errors[1], errors[0]);
}

TEST(Estimators, ModeNames) {
  EXPECT_EQ(estimator_mode_from_string("krr"), EstimatorMode::Krr);
  EXPECT_STREQ(to_string(EstimatorMode::Kde), "kde");
  EXPECT_THROW(estimator_mode_from_string("stein"), InvalidArgument);
}

}  // namespace
}  // namespace gminf
