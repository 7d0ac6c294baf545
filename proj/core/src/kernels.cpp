#include "gminf/kernels.hpp"

#include <cmath>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

void check_eps(const Vector& x, std::span<const Vector> eps) {
  if (eps.empty()) throw ShapeMismatch("kernel: empty mollifier draw set");
  for (const auto& e : eps) {
    if (e.size() != x.size()) {
      throw ShapeMismatch("kernel: mollifier draw dimension mismatch");
    }
  }
}

bool all_zero(std::span<const Vector> eps) {
  for (const auto& e : eps) {
    if (!e.isZero(0.0)) return false;
  }
  return true;
}

}  // namespace

FeatureExtractor FeatureExtractor::identity() { return FeatureExtractor{}; }

FeatureExtractor FeatureExtractor::mlp_hidden(std::shared_ptr<const MlpNet> net,
                                              std::size_t layer) {
  if (!net) throw InvalidArgument("FeatureExtractor: null network");
  if (layer < 1 || layer >= net->depth()) {
    throw InvalidArgument("FeatureExtractor: layer must index a hidden layer");
  }
  FeatureExtractor f;
  f.net_ = std::move(net);
  f.layer_ = layer;
  return f;
}

std::size_t FeatureExtractor::output_dim(std::size_t input_dim) const {
  return net_ ? net_->sizes()[layer_] : input_dim;
}

Vector FeatureExtractor::features(const Vector& x) const {
  return net_ ? mlp_layer_output(*net_, x, layer_) : x;
}

Eigen::MatrixXd FeatureExtractor::features(const Eigen::MatrixXd& x) const {
  return net_ ? mlp_forward_batch(*net_, x, layer_) : x;
}

Vector FeatureExtractor::pullback(const Vector& x, const Vector& u) const {
  return net_ ? mlp_input_vjp(*net_, x, u, layer_) : u;
}

void MollifierSpec::validate() const {
  if (!(sigma >= 0.0)) throw InvalidArgument("mollifier: sigma must be >= 0");
  if (samples < 1) throw InvalidArgument("mollifier: m must be >= 1");
  if (sigma_final && !(*sigma_final >= 0.0 && *sigma_final <= sigma)) {
    throw InvalidArgument("mollifier: sigma_final must lie in [0, sigma]");
  }
}

double MollifierSpec::sigma_at(std::size_t step, std::size_t total) const {
  if (!sigma_final || total <= 1) return sigma;
  const double frac = static_cast<double>(std::min(step, total - 1)) /
                      static_cast<double>(total - 1);
  return sigma + (*sigma_final - sigma) * frac;
}

void KernelSpec::validate() const {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InvalidArgument("kernel: bandwidth must be positive and finite");
  }
  mollifier.validate();
}

PointSet mollifier_draws(SeededRng& rng, std::size_t dim, double sigma,
                         std::size_t samples) {
  if (sigma == 0.0) return gaussian_draws(rng, 1, dim, 0.0);
  return gaussian_draws(rng, samples, dim, sigma);
}

double base_kernel(const KernelSpec& spec, const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw ShapeMismatch("base_kernel: dim mismatch");
  const Vector fx = spec.extractor.features(x);
  const Vector fy = spec.extractor.features(y);
  return std::exp(-(fx - fy).squaredNorm() / spec.bandwidth);
}

double mollified_kernel(const KernelSpec& spec, const Vector& x,
                        const Vector& y, std::span<const Vector> eps) {
  if (x.size() != y.size()) {
    throw ShapeMismatch("mollified_kernel: dim mismatch");
  }
  check_eps(x, eps);
  if (all_zero(eps)) return base_kernel(spec, x, y);
  const Vector fx = spec.extractor.features(x);
  double sum = 0.0;
  for (const auto& e : eps) {
    const Vector fy = spec.extractor.features(Vector(y - e));
    sum += std::exp(-(fx - fy).squaredNorm() / spec.bandwidth);
  }
  return sum / static_cast<double>(eps.size());
}

KernelGrad mollified_kernel_grad(const KernelSpec& spec, const Vector& x,
                                 const Vector& y, std::span<const Vector> eps) {
  if (x.size() != y.size()) {
    throw ShapeMismatch("mollified_kernel_grad: dim mismatch");
  }
  check_eps(x, eps);
  const double m = static_cast<double>(eps.size());
  const double h = spec.bandwidth;
  const Vector fx = spec.extractor.features(x);
  Vector ux = Vector::Zero(fx.size());
  Vector gy = Vector::Zero(y.size());
  for (const auto& e : eps) {
    const Vector ys = y - e;
    const Vector fy = spec.extractor.features(ys);
    const Vector diff = fx - fy;
    const double k = std::exp(-diff.squaredNorm() / h);
    ux -= (2.0 * k / (h * m)) * diff;
    gy += spec.extractor.pullback(ys, (2.0 * k / (h * m)) * diff);
  }
  return {spec.extractor.pullback(x, ux), gy};
}

Eigen::MatrixXd shifted_features(const FeatureExtractor& extractor,
                                 const PointSet& points,
                                 std::span<const Vector> eps) {
  if (points.empty()) return {};
  check_eps(points.front(), eps);
  const auto m = static_cast<Eigen::Index>(eps.size());
  Eigen::MatrixXd shifted(points.front().size(),
                          static_cast<Eigen::Index>(points.size()) * m);
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (points[j].size() != shifted.rows()) {
      throw ShapeMismatch("shifted_features: points differ in dimension");
    }
    for (Eigen::Index l = 0; l < m; ++l) {
      shifted.col(static_cast<Eigen::Index>(j) * m + l) =
          points[j] - eps[static_cast<std::size_t>(l)];
    }
  }
  return extractor.features(shifted);
}

DenseMatrix kernel_matrix_raw(const KernelSpec& spec, const PointSet& points,
                              std::span<const Vector> eps) {
  if (points.empty()) throw InvalidArgument("kernel_matrix: no points");
  const auto n = static_cast<Eigen::Index>(points.size());
  const auto m = static_cast<Eigen::Index>(eps.size());
  const Eigen::MatrixXd fx = spec.extractor.features(to_matrix(points));
  const Eigen::MatrixXd fy = shifted_features(spec.extractor, points, eps);
  const double h = spec.bandwidth;
  DenseMatrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double sum = 0.0;
      for (Eigen::Index l = 0; l < m; ++l) {
        sum += std::exp(-(fx.col(i) - fy.col(j * m + l)).squaredNorm() / h);
      }
      k(i, j) = m == 1 ? sum : sum / static_cast<double>(m);
    }
  }
  return k;
}

DenseMatrix kernel_matrix(const KernelSpec& spec, const PointSet& points,
                          std::span<const Vector> eps) {
  return symmetrize(kernel_matrix_raw(spec, points, eps));
}

double median_feature_bandwidth(const FeatureExtractor& extractor,
                                const PointSet& points) {
  if (points.size() < 2) {
    throw TooFewSamples("median_feature_bandwidth: need >= 2 points");
  }
  const Eigen::MatrixXd f = extractor.features(to_matrix(points));
  std::vector<double> d2;
  d2.reserve(points.size() * (points.size() - 1) / 2);
  for (Eigen::Index i = 0; i < f.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < f.cols(); ++j) {
      d2.push_back((f.col(i) - f.col(j)).squaredNorm());
    }
  }
  const double h = median(std::move(d2));
  return h > 0.0 ? h : 1.0;
}

}  // namespace gminf
