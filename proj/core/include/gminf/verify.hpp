#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gminf/numerics.hpp"

namespace gminf {

// ---------------------------------------------------------------------------
// Smoothing error of the mollified kernel.

struct SmoothingConfig {
  double bandwidth = 1.0;
  std::vector<double> sigma_grid{0.05, 0.1, 0.2, 0.4};
  std::size_t mc_samples = 100000;
  std::size_t probes = 20;
  std::size_t dim = 2;
  /// Closed-form agreement threshold, in Monte-Carlo standard errors.
  double max_std_errors = 3.0;
  double slope_low = 1.5;
  double slope_high = 2.5;
};

struct SmoothingProbe {
  Vector x;
  Vector y;
  std::vector<double> errors;             // |k_ψ(MC) - k| per sigma
  std::vector<double> closed_form_errors; // |k_ψ(exact) - k| per sigma
  std::vector<double> z_scores;           // |MC - exact| / standard error
  double slope = 0.0;
};

struct SmoothingReport {
  std::vector<double> sigma_grid;
  std::vector<SmoothingProbe> probes;
  std::vector<double> per_probe_slopes;
  double slope_median = 0.0;
  double max_z_score = 0.0;
  bool slope_ok = false;
  bool closed_form_ok = false;
  bool passed() const noexcept { return slope_ok && closed_form_ok; }
};

/// Identity-feature Gaussian kernel: measures |k_ψ - k| against sigma for
/// random probe pairs, fits the log-log slope per probe, and checks the
/// Monte-Carlo estimate against the closed-form Gaussian convolution
///   (h / (h + 2σ²))^{d/2} exp(-|x - y|² / (h + 2σ²)).
/// The same standard-normal draws are scaled by every sigma. Throws
/// DegenerateFit for grids with fewer than two sigmas or when a probe's error
/// underflows repeatedly.
SmoothingReport verify_smoothing(const SmoothingConfig& config, SeededRng& rng);

double gaussian_convolution_closed_form(double bandwidth, double sigma,
                                        std::size_t dim, double sq_distance);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Ridge-to-KDE limit.

struct KrrLimitReport {
  std::size_t n = 0;
  std::vector<double> eta_grid;
  std::vector<double> frobenius_by_eta;  // |(ηI + K)⁻¹ - η⁻¹ I|_F
  std::vector<double> envelope_by_eta;   // n η⁻²
  std::vector<double> closed_form_n1;    // k₁₁ / (η (η + k₁₁)) when n = 1
  bool strictly_decreasing = false;
  bool envelope_ok = false;
  bool passed() const noexcept { return strictly_decreasing && envelope_ok; }
};

KrrLimitReport verify_krr_limit(const DenseMatrix& k,
                                const std::vector<double>& eta_grid);

// ---------------------------------------------------------------------------
// Finite-difference audit of every differentiable path.

struct GradientCheckOptions {
  double tolerance = 1e-4;
  double fd_step = 1e-5;
  std::size_t probes = 10;
  /// Constant added to the analytic gradient of the named path; used as a
  /// negative control.
  std::map<std::string, double> bias;
};

struct GradientReport {
  std::map<std::string, double> max_rel_err;
  double tolerance = 0.0;
  std::vector<std::string> failures;
  bool passed() const noexcept { return failures.empty(); }
};

/// Paths: mlp_vjp, mollified_kernel_grad, grad_log_density, cond_grad,
/// latent_pullback, reg_grad.
GradientReport verify_gradients(std::uint64_t seed,
                                const GradientCheckOptions& options = {});

/// Central finite-difference gradient of a scalar function.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double step);

/// |a - b|₂ / max(|a|₂, |b|₂, 1e-12).
double relative_error(const Vector& analytic, const Vector& numeric);

nlohmann::json to_json(const SmoothingReport& r);
nlohmann::json to_json(const KrrLimitReport& r);
nlohmann::json to_json(const GradientReport& r);

}  // namespace gminf
