#include "gminf/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "gminf/errors.hpp"

namespace gminf {

namespace {

double gauss(const Vector& a, const Vector& b, double h) {
  return std::exp(-(a - b).squaredNorm() / h);
}

void collect_pairs(const PointSet& pts, std::vector<double>& out) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      out.push_back((pts[i] - pts[j]).squaredNorm());
    }
  }
}

bool point_sets_less(const PointSet& a, const PointSet& b) {
  return std::lexicographical_compare(
      a.begin(), a.end(), b.begin(), b.end(),
      [](const Vector& p, const Vector& q) {
        return std::lexicographical_compare(p.begin(), p.end(), q.begin(),
                                            q.end());
      });
}

}  // namespace

double mmd(const PointSet& x, const PointSet& y, double bandwidth) {
  if (x.size() < 2 || y.size() < 2) {
    throw TooFewSamples("mmd: each sample set needs at least two points");
  }
  if (!(bandwidth > 0.0)) throw InvalidArgument("mmd: bandwidth must be > 0");
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  double kxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      kxx += gauss(x[i], x[j], bandwidth);
    }
  }
  double kyy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = i + 1; j < y.size(); ++j) {
      kyy += gauss(y[i], y[j], bandwidth);
    }
  }
  // Cross term in a canonical orientation so mmd(x, y) == mmd(y, x) exactly.
  const bool x_first = nx != ny ? nx < ny : !point_sets_less(y, x);
  const PointSet& a = x_first ? x : y;
  const PointSet& b = x_first ? y : x;
  double kxy = 0.0;
  for (const auto& p : a) {
    for (const auto& q : b) kxy += gauss(p, q, bandwidth);
  }
  return 2.0 * kxx / (nx * (nx - 1.0)) + 2.0 * kyy / (ny * (ny - 1.0)) -
         2.0 * kxy / (nx * ny);
}

double median_bandwidth(const PointSet& x, const PointSet& y) {
  PointSet all = x;
  all.insert(all.end(), y.begin(), y.end());
  return median_bandwidth(all);
}

double median_bandwidth(const PointSet& x) {
  if (x.size() < 2) throw TooFewSamples("median_bandwidth: need >= 2 points");
  std::vector<double> d2;
  d2.reserve(x.size() * (x.size() - 1) / 2);
  collect_pairs(x, d2);
  const double h = median(std::move(d2));
  return h > 0.0 ? h : 1.0;
}

double energy_distance(const PointSet& x, const PointSet& y) {
  if (x.empty() || y.empty()) {
    throw TooFewSamples("energy_distance: empty sample set");
  }
  auto mean_dist = [](const PointSet& a, const PointSet& b) {
    double s = 0.0;
    for (const auto& p : a) {
      for (const auto& q : b) s += (p - q).norm();
    }
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  return 2.0 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y);
}

ModeCoverage mode_coverage(const PointSet& samples, const PointSet& modes,
                           double radius) {
  if (!(radius > 0.0)) {
    throw InvalidArgument("mode_coverage: radius must be positive");
  }
  const double r2 = radius * radius;
  std::vector<bool> covered(modes.size(), false);
  std::size_t hq = 0;
  for (const auto& s : samples) {
    bool near_any = false;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      if ((s - modes[k]).squaredNorm() <= r2) {
        covered[k] = true;
        near_any = true;
      }
    }
    if (near_any) ++hq;
  }
  ModeCoverage out;
  for (bool c : covered) out.modes_covered += c ? 1 : 0;
  out.hq_fraction = samples.empty() ? 0.0
                                    : static_cast<double>(hq) /
                                          static_cast<double>(samples.size());
  return out;
}

MetricReport evaluate(const PointSet& samples, const MetricContext& context) {
  MetricReport r;
  const double h = context.mmd_bandwidth > 0.0
                       ? context.mmd_bandwidth
                       : median_bandwidth(samples, context.reference);
  r.mmd = mmd(samples, context.reference, h);
  r.energy_distance = energy_distance(samples, context.reference);
  if (!context.modes.empty() && context.radius > 0.0) {
    const auto cov = mode_coverage(samples, context.modes, context.radius);
    r.modes_covered = cov.modes_covered;
    r.hq_fraction = cov.hq_fraction;
  }
  return r;
}

}  // namespace gminf
