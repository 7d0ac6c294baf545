#pragma once

#include <cstddef>

#include "gminf/numerics.hpp"

namespace gminf {

/// Unbiased squared MMD with kernel exp(-|a-b|²/h). May be slightly negative.
/// Throws TooFewSamples when either set has fewer than two points.
double mmd(const PointSet& x, const PointSet& y, double bandwidth);

/// Median of squared pairwise distances over the union of both sets.
double median_bandwidth(const PointSet& x, const PointSet& y);
double median_bandwidth(const PointSet& x);

/// V-statistic energy distance 2E|x-y| - E|x-x'| - E|y-y'|.
double energy_distance(const PointSet& x, const PointSet& y);

struct ModeCoverage {
  std::size_t modes_covered = 0;
  double hq_fraction = 0.0;
};

ModeCoverage mode_coverage(const PointSet& samples, const PointSet& modes,
                           double radius);

struct MetricReport {
  double mmd = 0.0;
  double energy_distance = 0.0;
  std::size_t modes_covered = 0;
  double hq_fraction = 0.0;
};

/// Reference data for scoring a sample set against the ground truth.
struct MetricContext {
  PointSet reference;
  PointSet modes;
  double radius = 0.0;
  /// Non-positive selects the median heuristic over samples ∪ reference.
  double mmd_bandwidth = 0.0;
};

MetricReport evaluate(const PointSet& samples, const MetricContext& context);

}  // namespace gminf
