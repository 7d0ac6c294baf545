#include "gminf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

}  // namespace

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(parent) ^ (index * 0xd1b54a32d192ed03ULL));
}

std::size_t SeededRng::index(std::size_t n) {
  auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(i, n - 1);
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

SeededRng SeededRng::child(std::uint64_t index) const {
  return SeededRng(derive_seed(seed_, index));
}

DenseMatrix cholesky_solve(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != a.cols()) {
    throw ShapeMismatch("cholesky_solve: matrix is not square");
  }
  if (b.rows() != a.rows()) {
    throw ShapeMismatch("cholesky_solve: right-hand side row count mismatch");
  }
  const double scale = std::max(1.0, max_abs(a));
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("cholesky_solve: matrix is not symmetric");
  }
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd work = a;
  Eigen::LLT<Eigen::MatrixXd> llt(work);
  if (llt.info() == Eigen::Success) {
    return llt.solve(Eigen::MatrixXd(b));
  }
  const double mean_diag = std::max(a.trace() / static_cast<double>(n), 1e-300);
  for (double jitter = kJitterStart; jitter <= kJitterMax * (1 + 1e-9);
       jitter *= 10.0) {
    work = a;
    work.diagonal().array() += jitter * mean_diag;
    llt.compute(work);
    if (llt.info() == Eigen::Success) {
      return llt.solve(Eigen::MatrixXd(b));
    }
  }
  std::ostringstream msg;
  msg << "cholesky_solve: factorization failed after jitter up to "
      << kJitterMax << " * trace/n (n = " << n << ")";
  throw NotPositiveDefinite(msg.str());
}

DenseMatrix symmetrize(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw ShapeMismatch("symmetrize: matrix is not square");
  }
  DenseMatrix out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out(i, j) = 0.5 * (a(i, j) + a(j, i));
    }
  }
  return out;
}

PointSet gaussian_draws(SeededRng& rng, std::size_t n, std::size_t dim,
                        double sigma) {
  if (!(sigma >= 0.0)) {
    throw InvalidArgument("gaussian_draws: sigma must be non-negative");
  }
  PointSet out(n, Vector::Zero(static_cast<Eigen::Index>(dim)));
  if (sigma == 0.0) return out;
  for (auto& v : out) {
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = sigma * rng.normal();
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median: empty input");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lo + hi);
}

double max_abs(const DenseMatrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace gminf
