#include "gminf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gminf/conditions.hpp"
#include "gminf/discrete_flow.hpp"
#include "gminf/errors.hpp"
#include "gminf/estimators.hpp"
#include "gminf/flow.hpp"
#include "gminf/kernels.hpp"
#include "gminf/nets.hpp"
#include "gminf/targets.hpp"

namespace gminf {

namespace {

constexpr std::size_t kMaxReprobes = 100;

std::vector<double> to_std(const Vector& v) {
  return {v.data(), v.data() + v.size()};
}

Vector random_vector(SeededRng& rng, std::size_t dim, double scale) {
  return gaussian_draws(rng, 1, dim, scale).front();
}

class GradientAudit {
 public:
  GradientAudit(const GradientCheckOptions& options, GradientReport& report)
      : options_(options), report_(report) {}

  void check(const std::string& path, Vector analytic,
             const std::function<double(const Vector&)>& f, const Vector& at) {
    if (auto it = options_.bias.find(path); it != options_.bias.end()) {
      analytic.array() += it->second;
    }
    const Vector numeric = finite_difference_gradient(f, at, options_.fd_step);
    const double err = relative_error(analytic, numeric);
    auto& slot = report_.max_rel_err[path];
    slot = std::max(slot, err);
  }

 private:
  const GradientCheckOptions& options_;
  GradientReport& report_;
};

MlpParams unflatten_like(const MlpParams& like, const Vector& flat) {
  MlpParams out = like;
  Eigen::Index k = 0;
  for (auto& l : out) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = flat[k++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = flat[k++];
  }
  return out;
}

Vector flatten(const MlpParams& params) {
  Eigen::Index total = 0;
  for (const auto& l : params) total += l.weight.size() + l.bias.size();
  Vector flat(total);
  Eigen::Index k = 0;
  for (const auto& l : params) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) flat[k++] = l.weight.data()[i];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) flat[k++] = l.bias[i];
  }
  return flat;
}

}  // namespace

double gaussian_convolution_closed_form(double bandwidth, double sigma,
                                        std::size_t dim, double sq_distance) {
  const double wide = bandwidth + 2.0 * sigma * sigma;
  return std::pow(bandwidth / wide, 0.5 * static_cast<double>(dim)) *
         std::exp(-sq_distance / wide);
}

double log_log_slope(const std::vector<double>& x,
                     const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DegenerateFit("log_log_slope: need at least two points");
  }
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw DegenerateFit("log_log_slope: non-positive value");
    }
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) throw DegenerateFit("log_log_slope: constant abscissa");
  return sxy / sxx;
}

SmoothingReport verify_smoothing(const SmoothingConfig& config,
                                 SeededRng& rng) {
  const auto& grid = config.sigma_grid;
  if (grid.size() < 2) {
    throw DegenerateFit("verify_smoothing: sigma grid needs >= 2 values");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw InvalidArgument(
          "verify_smoothing: sigma grid must be positive and increasing");
    }
  }
  if (config.mc_samples < 2 || config.probes < 1 || config.dim < 1) {
    throw InvalidArgument("verify_smoothing: bad sample or probe count");
  }
  const double h = config.bandwidth;
  const auto m = static_cast<double>(config.mc_samples);
  // Standard-normal draws shared by every probe and sigma.
  SeededRng draw_rng = rng.child(1);
  const PointSet xi =
      gaussian_draws(draw_rng, config.mc_samples, config.dim, 1.0);
  SeededRng probe_rng = rng.child(2);

  SmoothingReport report;
  report.sigma_grid = grid;
  for (std::size_t p = 0; p < config.probes; ++p) {
    bool ok = false;
    for (std::size_t attempt = 0; attempt < kMaxReprobes && !ok; ++attempt) {
      SmoothingProbe probe;
      probe.x = random_vector(probe_rng, config.dim, 1.0);
      probe.y = random_vector(probe_rng, config.dim, 1.0);
      const Vector delta = probe.x - probe.y;
      const double base = std::exp(-delta.squaredNorm() / h);
      ok = true;
      for (double sigma : grid) {
        double sum = 0.0;
        double sum_sq = 0.0;
        for (const auto& e : xi) {
          const double k = std::exp(-(delta + sigma * e).squaredNorm() / h);
          sum += k;
          sum_sq += k * k;
        }
        const double mean = sum / m;
        const double var = std::max(sum_sq / m - mean * mean, 0.0);
        const double std_err = std::sqrt(var / (m - 1.0));
        const double exact = gaussian_convolution_closed_form(
            h, sigma, config.dim, delta.squaredNorm());
        const double err = std::abs(mean - base);
        if (!(err > 0.0) || !std::isfinite(err)) {
          ok = false;
          break;
        }
        probe.errors.push_back(err);
        probe.closed_form_errors.push_back(std::abs(exact - base));
        probe.z_scores.push_back(std_err > 0.0 ? std::abs(mean - exact) / std_err
                                               : 0.0);
      }
      if (ok) {
        probe.slope = log_log_slope(grid, probe.errors);
        report.per_probe_slopes.push_back(probe.slope);
        for (double z : probe.z_scores) {
          report.max_z_score = std::max(report.max_z_score, z);
        }
        report.probes.push_back(std::move(probe));
      }
    }
    if (!ok) {
      throw DegenerateFit("verify_smoothing: smoothing error underflowed for "
                          "every re-drawn probe pair");
    }
  }
  report.slope_median = median(report.per_probe_slopes);
  report.slope_ok = report.slope_median >= config.slope_low &&
                    report.slope_median <= config.slope_high;
  report.closed_form_ok = report.max_z_score <= config.max_std_errors;
  return report;
}

KrrLimitReport verify_krr_limit(const DenseMatrix& k,
                                const std::vector<double>& eta_grid) {
  if (k.rows() != k.cols() || k.rows() == 0) {
    throw ShapeMismatch("verify_krr_limit: kernel matrix must be square");
  }
  for (std::size_t i = 0; i < eta_grid.size(); ++i) {
    if (!(eta_grid[i] > 0.0) || (i > 0 && !(eta_grid[i] > eta_grid[i - 1]))) {
      throw InvalidArgument("verify_krr_limit: eta grid must be increasing");
    }
  }
  KrrLimitReport report;
  report.n = static_cast<std::size_t>(k.rows());
  report.eta_grid = eta_grid;
  const auto n = k.rows();
  const DenseMatrix eye = DenseMatrix::Identity(n, n);
  report.envelope_ok = true;
  for (double eta : eta_grid) {
    DenseMatrix a = k;
    a.diagonal().array() += eta;
    const DenseMatrix inv = cholesky_solve(a, eye);
    const double dist = (inv - eye / eta).norm();
    const double envelope = static_cast<double>(n) / (eta * eta);
    report.frobenius_by_eta.push_back(dist);
    report.envelope_by_eta.push_back(envelope);
    report.envelope_ok = report.envelope_ok && dist <= envelope;
    if (n == 1) {
      report.closed_form_n1.push_back(k(0, 0) / (eta * (eta + k(0, 0))));
    }
  }
  report.strictly_decreasing = true;
  for (std::size_t i = 1; i < report.frobenius_by_eta.size(); ++i) {
    if (!(report.frobenius_by_eta[i] < report.frobenius_by_eta[i - 1])) {
      report.strictly_decreasing = false;
    }
  }
  return report;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double step) {
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double hi = f(probe);
    probe[i] = x[i] - step;
    const double lo = f(probe);
    probe[i] = x[i];
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

double relative_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
  return (analytic - numeric).norm() / scale;
}

GradientReport verify_gradients(std::uint64_t seed,
                                const GradientCheckOptions& options) {
  GradientReport report;
  report.tolerance = options.tolerance;
  GradientAudit audit(options, report);
  SeededRng rng(seed);

  // mlp_vjp: input and parameter gradients of uᵀ f(x).
  {
    SeededRng r = rng.child(1);
    const MlpNet net = MlpNet::random({4, 6, 6, 2}, Activation::Tanh, r);
    for (std::size_t p = 0; p < options.probes; ++p) {
      const Vector x = random_vector(r, 4, 1.0);
      const Vector u = random_vector(r, 2, 1.0);
      const auto vjp = mlp_vjp(net, x, u);
      audit.check("mlp_vjp", vjp.grad_input,
                  [&](const Vector& v) { return u.dot(mlp_forward(net, v)); },
                  x);
      const Vector theta = flatten(net.layers());
      audit.check(
          "mlp_vjp", flatten(vjp.grad_params),
          [&](const Vector& t) {
            MlpNet moved = net;
            moved.layers() = unflatten_like(net.layers(), t);
            return u.dot(mlp_forward(moved, x));
          },
          theta);
    }
  }

  // Shared feature network for the kernel and estimator paths.
  SeededRng feat_rng = rng.child(2);
  auto features = std::make_shared<const MlpNet>(
      MlpNet::random({2, 8, 8, 1}, Activation::Tanh, feat_rng));
  KernelSpec spec;
  spec.extractor = FeatureExtractor::mlp_hidden(features, 2);
  spec.bandwidth = 2.0;
  spec.mollifier = {0.3, 8, std::nullopt};

  {
    SeededRng r = rng.child(3);
    const PointSet eps = gaussian_draws(r, 8, 2, 0.3);
    for (std::size_t p = 0; p < options.probes; ++p) {
      const Vector x = random_vector(r, 2, 1.0);
      const Vector y = random_vector(r, 2, 1.0);
      const auto g = mollified_kernel_grad(spec, x, y, eps);
      audit.check("mollified_kernel_grad", g.grad_x,
                  [&](const Vector& v) { return mollified_kernel(spec, v, y, eps); },
                  x);
      audit.check("mollified_kernel_grad", g.grad_y,
                  [&](const Vector& v) { return mollified_kernel(spec, x, v, eps); },
                  y);
    }
  }

  {
    SeededRng r = rng.child(4);
    const PointSet basis = gaussian_draws(r, 12, 2, 1.0);
    const DensityEstimate est = fit_krr(basis, spec, 1.0, r);
    const DensityEstimate kde = fit_kde(basis, spec, r);
    for (std::size_t p = 0; p < options.probes; ++p) {
      const Vector x = random_vector(r, 2, 1.0);
      audit.check("grad_log_density", grad_log_density(est, x),
                  [&](const Vector& v) { return log_density(est, v); }, x);
      audit.check("grad_log_density", grad_log_density(kde, x),
                  [&](const Vector& v) { return log_density(kde, v); }, x);
    }
  }

  {
    SeededRng r = rng.child(5);
    const GmmTarget mixture({{0.3, random_vector(r, 2, 1.0), 0.7},
                             {0.5, random_vector(r, 2, 1.0), 0.9},
                             {0.2, random_vector(r, 2, 1.0), 0.6}});
    auto disc = std::make_shared<const MlpNet>(
        MlpNet::random({2, 8, 8, 1}, Activation::Tanh, r));
    const std::vector<ConditionModel> models = {
        ConditionModel(ComponentCondition{mixture, 1, 1.5}),
        ConditionModel(DiscriminatorCondition{disc}),
        ConditionModel(MaskCondition{{1}, Vector::Constant(1, 0.4), 0.5}),
    };
    for (std::size_t p = 0; p < options.probes; ++p) {
      const Vector x = random_vector(r, 2, 1.0);
      for (const auto& model : models) {
        audit.check("cond_grad", cond_grad(model, x),
                    [&](const Vector& v) { return cond_log_likelihood(model, v); },
                    x);
      }
    }
  }

  {
    SeededRng r = rng.child(6);
    const Generator g = Generator::mlp(std::make_shared<const MlpNet>(
        MlpNet::random({2, 16, 16, 2}, Activation::Tanh, r)));
    for (std::size_t p = 0; p < options.probes; ++p) {
      const Vector z = random_vector(r, 2, 1.0);
      const Vector gx = random_vector(r, 2, 1.0);
      audit.check("latent_pullback", latent_pullback(g, z, gx),
                  [&](const Vector& v) { return gx.dot(g.generate(v)); }, z);
    }
  }

  {
    SeededRng r = rng.child(7);
    const Codebook cb = Codebook::random(16, 2, r);
    const double alpha = 0.7;
    for (std::size_t p = 0; p < options.probes; ++p) {
      SlottedLatent s;
      for (int k = 0; k < 3; ++k) s.slots.push_back(random_vector(r, 2, 1.0));
      SlottedLatent grad;
      grad.slots = reg_grad(cb, s, alpha);
      audit.check(
          "reg_grad", grad.concat(),
          [&](const Vector& v) {
            return reg_value(cb, SlottedLatent::split(v, 2), alpha);
          },
          s.concat());
    }
  }

  for (const auto& [path, err] : report.max_rel_err) {
    if (!(err < options.tolerance)) {
      std::ostringstream msg;
      msg << path << ": max relative error " << err << " >= "
          << options.tolerance;
      report.failures.push_back(msg.str());
    }
  }
  return report;
}

nlohmann::json to_json(const SmoothingReport& r) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : r.probes) {
    probes.push_back({{"x", to_std(p.x)},
                      {"y", to_std(p.y)},
                      {"errors", p.errors},
                      {"closed_form_errors", p.closed_form_errors},
                      {"z_scores", p.z_scores},
                      {"slope", p.slope}});
  }
  return {{"sigma_grid", r.sigma_grid},
          {"slope_median", r.slope_median},
          {"per_probe_slopes", r.per_probe_slopes},
          {"max_z_score", r.max_z_score},
          {"slope_ok", r.slope_ok},
          {"closed_form_ok", r.closed_form_ok},
          {"passed", r.passed()},
          {"probes", probes}};
}

nlohmann::json to_json(const KrrLimitReport& r) {
  nlohmann::json j = {{"n", r.n},
                      {"eta_grid", r.eta_grid},
                      {"frobenius_by_eta", r.frobenius_by_eta},
                      {"envelope_by_eta", r.envelope_by_eta},
                      {"strictly_decreasing", r.strictly_decreasing},
                      {"envelope_ok", r.envelope_ok},
                      {"passed", r.passed()}};
  if (!r.closed_form_n1.empty()) j["closed_form_n1"] = r.closed_form_n1;
  return j;
}

nlohmann::json to_json(const GradientReport& r) {
  return {{"fd_max_rel_err_by_path", r.max_rel_err},
          {"tolerance", r.tolerance},
          {"failures", r.failures},
          {"passed", r.passed()}};
}

}  // namespace gminf
