#include "gminf/estimators.hpp"

#include <cmath>
#include <limits>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

struct Evaluation {
  double log_value = 0.0;
  Vector feature_grad;  // ∇ of log Σ w k with respect to d(x)
  bool clamped = false;
};

Evaluation evaluate(const DensityEstimate& est, const Vector& x,
                    bool with_grad) {
  if (!x.allFinite()) throw InvalidArgument("density estimate: x not finite");
  if (x.size() != est.basis().front().size()) {
    throw ShapeMismatch("density estimate: query dimension mismatch");
  }
  const auto& shifted = est.shifted_features();
  const auto m = static_cast<Eigen::Index>(est.eps().size());
  const auto n = static_cast<Eigen::Index>(est.basis().size());
  const double h = est.kernel().bandwidth;
  const Vector fx = est.kernel().extractor.features(x);

  Vector expo(n * m);
  for (Eigen::Index c = 0; c < n * m; ++c) {
    expo[c] = -(fx - shifted.col(c)).squaredNorm() / h;
  }
  const double top = expo.maxCoeff();

  // Σ_j w_j (1/m) Σ_l exp(a_jl - top), kept relative to the largest exponent
  // so that the log and the gradient ratio never underflow.
  double scaled = 0.0;
  Vector dir = Vector::Zero(fx.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    double inner = 0.0;
    for (Eigen::Index l = 0; l < m; ++l) {
      const double e = std::exp(expo[j * m + l] - top);
      inner += e;
      if (with_grad) {
        dir -= (est.weights()[j] * e * 2.0 / h) * (fx - shifted.col(j * m + l));
      }
    }
    scaled += est.weights()[j] * inner;
  }
  scaled /= static_cast<double>(m);

  Evaluation out;
  static const double log_floor = std::log(kDensityFloor);
  if (!(scaled > 0.0) || top + std::log(scaled) < log_floor) {
    out.log_value = log_floor;
    out.clamped = true;
    est.record_clamp();
    return out;
  }
  out.log_value = top + std::log(scaled);
  if (with_grad) out.feature_grad = dir / (static_cast<double>(m) * scaled);
  return out;
}

DensityEstimate make_estimate(const PointSet& basis, const KernelSpec& kernel,
                              double ridge, PointSet eps, EstimatorMode mode) {
  if (basis.empty()) throw InvalidArgument("fit: empty basis");
  kernel.validate();
  if (!(ridge > 0.0)) throw InvalidArgument("fit: ridge must be positive");
  const auto n = static_cast<Eigen::Index>(basis.size());
  Vector weights = Vector::Ones(n);
  if (mode == EstimatorMode::Krr) {
    DenseMatrix a = kernel_matrix(kernel, basis, eps);
    a.diagonal().array() += ridge;
    weights = cholesky_solve(a, DenseMatrix::Ones(n, 1)).col(0);
  }
  return DensityEstimate(basis, std::move(weights), kernel, std::move(eps),
                         ridge, mode);
}

}  // namespace

const char* to_string(EstimatorMode mode) noexcept {
  return mode == EstimatorMode::Krr ? "krr" : "kde";
}

EstimatorMode estimator_mode_from_string(const std::string& name) {
  if (name == "krr") return EstimatorMode::Krr;
  if (name == "kde") return EstimatorMode::Kde;
  throw InvalidArgument("unknown estimator mode '" + name + "'");
}

DensityEstimate::DensityEstimate(PointSet basis, Vector weights,
                                 KernelSpec kernel, PointSet eps, double ridge,
                                 EstimatorMode mode)
    : basis_(std::move(basis)),
      weights_(std::move(weights)),
      kernel_(std::move(kernel)),
      eps_(std::move(eps)),
      ridge_(ridge),
      mode_(mode) {
  if (basis_.empty()) throw InvalidArgument("DensityEstimate: empty basis");
  if (static_cast<std::size_t>(weights_.size()) != basis_.size()) {
    throw ShapeMismatch("DensityEstimate: weights/basis length mismatch");
  }
  if (!(ridge_ > 0.0)) throw InvalidArgument("DensityEstimate: ridge <= 0");
  shifted_ = gminf::shifted_features(kernel_.extractor, basis_, eps_);
}

DensityEstimate::DensityEstimate(const DensityEstimate& other)
    : basis_(other.basis_),
      weights_(other.weights_),
      kernel_(other.kernel_),
      eps_(other.eps_),
      ridge_(other.ridge_),
      mode_(other.mode_),
      shifted_(other.shifted_),
      clamps_(other.clamps_.load()) {}

DensityEstimate& DensityEstimate::operator=(const DensityEstimate& other) {
  if (this != &other) {
    basis_ = other.basis_;
    weights_ = other.weights_;
    kernel_ = other.kernel_;
    eps_ = other.eps_;
    ridge_ = other.ridge_;
    mode_ = other.mode_;
    shifted_ = other.shifted_;
    clamps_.store(other.clamps_.load());
  }
  return *this;
}

DensityEstimate fit_krr(const PointSet& basis, const KernelSpec& kernel,
                        double ridge, SeededRng& rng) {
  if (basis.empty()) throw InvalidArgument("fit_krr: empty basis");
  return fit_krr(basis, kernel, ridge,
                 mollifier_draws(rng, static_cast<std::size_t>(basis[0].size()),
                                 kernel.mollifier.sigma,
                                 kernel.mollifier.samples));
}

DensityEstimate fit_krr(const PointSet& basis, const KernelSpec& kernel,
                        double ridge, PointSet eps) {
  return make_estimate(basis, kernel, ridge, std::move(eps), EstimatorMode::Krr);
}

DensityEstimate fit_kde(const PointSet& basis, const KernelSpec& kernel,
                        SeededRng& rng) {
  if (basis.empty()) throw InvalidArgument("fit_kde: empty basis");
  return fit_kde(basis, kernel,
                 mollifier_draws(rng, static_cast<std::size_t>(basis[0].size()),
                                 kernel.mollifier.sigma,
                                 kernel.mollifier.samples));
}

DensityEstimate fit_kde(const PointSet& basis, const KernelSpec& kernel,
                        PointSet eps) {
  return make_estimate(basis, kernel, 1.0, std::move(eps), EstimatorMode::Kde);
}

double log_density(const DensityEstimate& est, const Vector& x) {
  return evaluate(est, x, false).log_value;
}

Vector grad_log_density(const DensityEstimate& est, const Vector& x) {
  const auto ev = evaluate(est, x, true);
  if (ev.clamped) return Vector::Zero(x.size());
  return est.kernel().extractor.pullback(x, ev.feature_grad);
}

}  // namespace gminf
