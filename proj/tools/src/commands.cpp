#include "gminf_app/commands.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gminf/version.hpp"

namespace gminf::app {
namespace {

constexpr std::size_t kNetsStream = 0;

nlohmann::json vec_json(const Vector& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create directory '" + dir.string() + "'");
}

std::string seed_header(std::uint64_t seed) {
  return "# seed=" + std::to_string(seed) + "\n";
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string particles_csv(const ParticleSet& p, std::uint64_t seed) {
  std::string out = seed_header(seed);
  const auto dz = p.z.empty() ? 0 : p.z.front().size();
  const auto dx = p.x.empty() ? 0 : p.x.front().size();
  for (Eigen::Index k = 0; k < dz; ++k) out += "z" + std::to_string(k) + ",";
  for (Eigen::Index k = 0; k < dx; ++k) {
    out += "x" + std::to_string(k) + (k + 1 < dx ? "," : "");
  }
  out += "\n";
  for (std::size_t i = 0; i < p.z.size(); ++i) {
    for (Eigen::Index k = 0; k < dz; ++k) out += format_number(p.z[i][k]) + ",";
    for (Eigen::Index k = 0; k < dx; ++k) {
      out += format_number(p.x[i][k]) + (k + 1 < dx ? "," : "");
    }
    out += "\n";
  }
  return out;
}

/// Appends JSON lines to a file, flushing each one.
class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoFailure("cannot write '" + path.string() + "'");
  }
  void write(const nlohmann::json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw IoFailure("write failed");
  }

 private:
  std::ofstream out_;
};

FlowConfig effective_flow(const RunConfig& config, const RefineSetup& setup) {
  FlowConfig flow = config.refine.flow;
  if (flow.features == FeatureSource::DiscriminatorHidden &&
      !setup.discriminator) {
    throw ConfigInvalid(
        "refine.features: discriminator features need a discriminator");
  }
  return flow;
}

struct RunTotals {
  double clamp_q = 0.0;
  double clamp_p = 0.0;
  double clip_events = 0.0;
};

void accumulate(RunTotals& totals, const StepMetrics& m) {
  totals.clamp_q += static_cast<double>(m.clamp_count_q);
  totals.clamp_p += static_cast<double>(m.clamp_count_p);
  totals.clip_events += static_cast<double>(m.clip_events);
}

void record_totals(RunRecorder& recorder, const RunTotals& totals) {
  recorder.add_diagnostic("clamp_count_q_total", totals.clamp_q);
  recorder.add_diagnostic("clamp_count_p_total", totals.clamp_p);
  recorder.add_diagnostic("clip_events_total", totals.clip_events);
}

std::string cell_name(EstimatorMode est, double sigma, const std::string& term,
                      double step, std::size_t steps) {
  return std::string(to_string(est)) + "_sigma" + format_number(sigma) +
         "_" + term + "_lr" + format_number(step) + "_T" + std::to_string(steps);
}

FlowConfig cell_flow(const FlowConfig& base, EstimatorMode est, double sigma,
                     const std::string& term, double step, std::size_t steps) {
  FlowConfig f = base;
  f.estimator = est;
  f.mollifier.sigma = sigma;
  if (f.mollifier.sigma_final && *f.mollifier.sigma_final > sigma) {
    f.mollifier.sigma_final = sigma;
  }
  f.steps = steps;
  f.lambda1 = (term == "all" || term == "q") ? step : 0.0;
  f.lambda2 = (term == "all" || term == "p") ? step : 0.0;
  f.lambda3 = (term == "all" || term == "c") ? step : 0.0;
  return f;
}

PointSet random_psd_points(SeededRng& rng, std::size_t n) {
  return gaussian_draws(rng, n, 2, 1.0);
}

}  // namespace

// ---------------------------------------------------------------------------

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::InvalidArgument:
      return kExitConfig;
    case ErrorKind::DegenerateFit:
      return kExitVerification;
    case ErrorKind::IoFailure:
      return kExitIo;
    default:
      return kExitNumerical;
  }
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoFailure("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot read '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json metric_json(const MetricReport& m) {
  return {{"mmd", m.mmd},
          {"energy_distance", m.energy_distance},
          {"modes_covered", m.modes_covered},
          {"hq_fraction", m.hq_fraction}};
}

nlohmann::json step_json(const StepMetrics& m, std::uint64_t seed) {
  nlohmann::json j = {{"seed", seed},
                      {"t", m.t},
                      {"clamp_count_q", m.clamp_count_q},
                      {"clamp_count_p", m.clamp_count_p},
                      {"grad_norm_mean", m.grad_norm_mean},
                      {"clip_events", m.clip_events},
                      {"sigma_current", m.sigma_current}};
  if (m.metrics) {
    const nlohmann::json metrics = metric_json(*m.metrics);
    for (const auto& [k, v] : metrics.items()) j[k] = v;
  }
  return j;
}

// ---------------------------------------------------------------------------

RunRecorder::RunRecorder(fs::path out, std::string command,
                         const RunConfig& config)
    : out_(std::move(out)), command_(std::move(command)), config_(config) {
  ensure_dir(out_);
  write_text(out_ / "effective_config.ini", to_ini(config_));
}

void RunRecorder::write_manifest(const nlohmann::json& derived) {
  if (manifest_written_) throw IoFailure("manifest already written");
  nlohmann::json m = {
      {"command", command_},
      {"seed", config_.seed},
      {"library_version", std::string(kVersion)},
      {"prng_algorithm", std::string(SeededRng::kAlgorithm)},
      {"started_at_utc", utc_now()},
      {"config", to_json(config_)},
      {"derived", derived},
      {"notes",
       {{"target_samples", "drawn once per run and held fixed"},
        {"mollifier_draws", "fresh per estimator construction, seeded by step"},
        {"status_file", "run_status.json"}}},
  };
  write_json(out_ / "manifest.json", m);
  manifest_written_ = true;
}

void RunRecorder::add_diagnostic(const std::string& key, double value) {
  diagnostics_[key] = value;
}

void RunRecorder::finish_ok() {
  write_json(out_ / "run_status.json", {{"seed", config_.seed},
                                        {"status", "ok"},
                                        {"diagnostics", diagnostics_}});
}

void RunRecorder::finish_failed(ErrorKind kind, const std::string& message) {
  if (!manifest_written_) write_manifest({{"failed_before_derivation", true}});
  write_json(out_ / "run_status.json", {{"seed", config_.seed},
                                        {"status", "failed"},
                                        {"error_kind", to_string(kind)},
                                        {"message", message},
                                        {"exit_code", exit_code(kind)},
                                        {"diagnostics", diagnostics_}});
}

// ---------------------------------------------------------------------------

double hq_radius(const RunConfig& config, const GmmTarget& target) {
  return config.eval.hq_radius > 0.0 ? config.eval.hq_radius
                                     : 3.0 * target.max_stddev();
}

RefineSetup make_refine_setup(const RunConfig& config, const fs::path& nets_dir) {
  RefineSetup s;
  s.target = GmmTarget::by_name(config.target);
  const std::size_t dim = s.target.dim();
  const auto& r = config.refine;

  if (!r.generator_file.empty()) {
    s.discriminator = std::make_shared<const MlpNet>(load_net(r.discriminator_file));
    if (s.discriminator->input_dim() != dim || s.discriminator->output_dim() != 1) {
      throw ConfigInvalid("refine.discriminator_file: net shape does not fit target");
    }
  }
  if (r.generator == "identity") {
    s.generator = Generator::identity(dim);
  } else if (!r.generator_file.empty()) {
    auto g = std::make_shared<const MlpNet>(load_net(r.generator_file));
    if (g->output_dim() != dim) {
      throw ConfigInvalid("refine.generator_file: output dimension != target");
    }
    s.generator = Generator::mlp(std::move(g));
  } else {
    SeededRng rng = stream(config, Stream::Gan);
    GanResult gan = train_toy_gan(s.target, config.gan, rng);
    if (!nets_dir.empty()) {
      ensure_dir(nets_dir);
      save_net(gan.generator, (nets_dir / "generator.bin").string());
      save_net(gan.discriminator, (nets_dir / "discriminator.bin").string());
    }
    s.generator = Generator::mlp(std::make_shared<const MlpNet>(std::move(gan.generator)));
    s.discriminator = std::make_shared<const MlpNet>(std::move(gan.discriminator));
  }

  SeededRng ref_rng = stream(config, Stream::Reference);
  s.metrics.reference = gmm_sample(s.target, config.eval.reference_samples, ref_rng);
  s.metrics.modes = s.target.modes();
  s.metrics.radius = hq_radius(config, s.target);
  s.metrics.mmd_bandwidth = config.eval.mmd_bandwidth;
  SeededRng fit_rng = stream(config, Stream::TargetFit);
  s.target_samples = gmm_sample(s.target, r.flow.target_samples, fit_rng);
  return s;
}

ConditionModel make_condition(const RunConfig& config, const std::string& kind,
                              const RefineSetup& setup) {
  const auto& c = config.refine.condition;
  if (kind == "none") return ConditionModel{};
  if (kind == "discriminator") {
    if (!setup.discriminator) {
      throw ConfigInvalid("refine.condition: discriminator condition needs a discriminator");
    }
    return ConditionModel(DiscriminatorCondition{setup.discriminator});
  }
  if (kind == "mask") {
    Vector values(static_cast<Eigen::Index>(c.mask_values.size()));
    for (std::size_t i = 0; i < c.mask_values.size(); ++i) {
      values[static_cast<Eigen::Index>(i)] = c.mask_values[i];
    }
    return ConditionModel(MaskCondition{c.mask_observed, values, c.mask_tau});
  }
  if (kind == "component") {
    if (c.component >= setup.target.size()) {
      throw ConfigInvalid("refine.component: index out of range");
    }
    return ConditionModel(ComponentCondition{setup.target, c.component, c.beta});
  }
  throw ConfigInvalid("refine.condition: unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

TrainGanSummary cmd_train_gan(const RunConfig& config, const fs::path& out) {
  RunRecorder recorder(out, "train-gan", config);
  try {
    const GmmTarget target = GmmTarget::by_name(config.target);
    recorder.write_manifest({{"steps_planned",
                              config.gan.early_stop
                                  ? std::min(config.gan.steps, *config.gan.early_stop)
                                  : config.gan.steps}});
    SeededRng rng = stream(config, Stream::Gan);
    TrainGanSummary s{train_toy_gan(target, config.gan, rng), {}};
    save_net(s.result.generator, (out / "generator.bin").string());
    save_net(s.result.discriminator, (out / "discriminator.bin").string());

    std::string csv = seed_header(config.seed) +
                      "step,discriminator_loss,generator_loss,mmd\n";
    for (const auto& h : s.result.history) {
      csv += std::to_string(h.step) + "," + format_number(h.discriminator_loss) +
             "," + format_number(h.generator_loss) + "," + format_number(h.mmd) +
             "\n";
    }
    write_text(out / "history.csv", csv);

    SeededRng ref_rng = stream(config, Stream::Reference);
    MetricContext ctx{gmm_sample(target, config.eval.reference_samples, ref_rng),
                      target.modes(), hq_radius(config, target),
                      config.eval.mmd_bandwidth};
    SeededRng z_rng = stream(config, Stream::Refine);
    const Generator g = Generator::mlp(std::make_shared<const MlpNet>(s.result.generator));
    const PointSet x = g.generate(
        gaussian_draws(z_rng, config.refine.flow.particles, g.latent_dim(), 1.0));
    s.final_metrics = evaluate(x, ctx);
    write_json(out / "gan_report.json",
               {{"seed", config.seed},
                {"steps_run", s.result.steps_run},
                {"samples", x.size()},
                {"metrics", metric_json(s.final_metrics)}});
    recorder.add_diagnostic("steps_run", static_cast<double>(s.result.steps_run));
    recorder.finish_ok();
    return s;
  } catch (const Error& e) {
    recorder.finish_failed(e.kind(), e.what());
    throw;
  }
}

RefineSummary cmd_refine(const RunConfig& config, const fs::path& out) {
  RunRecorder recorder(out, "refine", config);
  try {
    const RefineSetup setup = make_refine_setup(config, out / "nets");
    const FlowConfig flow = effective_flow(config, setup);
    RefineSummary s{{}, make_condition(config, config.refine.condition.kind, setup)};

    JsonlWriter traj(out / "trajectory.jsonl");
    RunTotals totals;
    RefineObserver obs;
    obs.on_start = [&](double bw, double mmd_bw) {
      recorder.write_manifest({{"kernel_bandwidth", bw},
                               {"mmd_bandwidth", mmd_bw},
                               {"hq_radius", setup.metrics.radius}});
    };
    obs.on_step = [&](const StepMetrics& m) {
      accumulate(totals, m);
      traj.write(step_json(m, config.seed));
    };
    SeededRng rng = stream(config, Stream::Refine);
    s.result = refine(setup.generator, setup.discriminator, &setup.target_samples,
                      s.condition, flow, rng, &setup.metrics, &obs);
    write_text(out / "particles.csv", particles_csv(s.result.final, config.seed));
    write_json(out / "refine_report.json",
               {{"seed", config.seed},
                {"estimator", to_string(flow.estimator)},
                {"features", to_string(flow.features)},
                {"condition", s.condition.name()},
                {"kernel_bandwidth", s.result.bandwidth},
                {"mmd_bandwidth", s.result.mmd_bandwidth},
                {"initial", metric_json(*s.result.trajectory.front().metrics)},
                {"final", metric_json(*s.result.trajectory.back().metrics)}});
    record_totals(recorder, totals);
    recorder.finish_ok();
    return s;
  } catch (const Error& e) {
    recorder.finish_failed(e.kind(), e.what());
    throw;
  }
}

std::vector<AblationCell> cmd_ablate(const RunConfig& config, const fs::path& out) {
  RunRecorder recorder(out, "ablate", config);
  try {
    const RefineSetup setup = make_refine_setup(config, out / "nets");
    const FlowConfig base = effective_flow(config, setup);
    const ConditionModel cond = make_condition(config, config.ablate.condition, setup);
    const auto& a = config.ablate;

    std::vector<AblationCell> cells;
    for (EstimatorMode est : a.estimators) {
      for (double sigma : a.sigmas) {
        for (const auto& term : a.terms) {
          for (double step : a.step_sizes) {
            for (std::size_t steps : a.steps) {
              AblationCell c;
              c.name = cell_name(est, sigma, term, step, steps);
              c.estimator = est;
              c.sigma = sigma;
              c.term = term;
              c.step_size = step;
              c.steps = steps;
              cells.push_back(std::move(c));
            }
          }
        }
      }
    }
    recorder.write_manifest({{"cells", cells.size()},
                             {"condition", cond.name()},
                             {"hq_radius", setup.metrics.radius}});

    RunTotals totals;
    std::string csv = seed_header(config.seed) +
                      "cell,estimator,sigma,term,step_size,steps,status,flag,"
                      "kernel_bandwidth,mmd_bandwidth,initial_mmd,final_mmd,"
                      "initial_modes,final_modes,initial_hq_fraction,"
                      "final_hq_fraction,error\n";
    for (auto& c : cells) {
      const fs::path dir = out / "cells" / c.name;
      ensure_dir(dir);
      double bw = 0.0;
      double mmd_bw = 0.0;
      try {
        const FlowConfig flow = cell_flow(base, c.estimator, c.sigma, c.term,
                                          c.step_size, c.steps);
        JsonlWriter traj(dir / "trajectory.jsonl");
        RefineObserver obs;
        obs.on_step = [&](const StepMetrics& m) {
          accumulate(totals, m);
          traj.write(step_json(m, config.seed));
        };
        // Every cell shares the run seed so all start from the same particles.
        SeededRng rng = stream(config, Stream::Refine);
        const RefineResult r = refine(setup.generator, setup.discriminator,
                                      &setup.target_samples, cond, flow, rng,
                                      &setup.metrics, &obs);
        write_text(dir / "particles.csv", particles_csv(r.final, config.seed));
        bw = r.bandwidth;
        mmd_bw = r.mmd_bandwidth;
        c.status = "ok";
        c.initial = r.trajectory.front().metrics;
        c.final = r.trajectory.back().metrics;
        if (c.final->mmd > c.initial->mmd) c.flag = "mmd_regression";
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::IoFailure) throw;
        c.status = "failed";
        c.error = e.what();
        c.flag = e.kind() == ErrorKind::NonFiniteUpdate ? "nonfinite" : "error";
      }
      auto num = [](const std::optional<MetricReport>& m, auto field) {
        return m ? format_number(static_cast<double>((*m).*field)) : std::string();
      };
      std::string err = c.error;
      for (auto& ch : err) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      csv += c.name + "," + to_string(c.estimator) + "," + format_number(c.sigma) +
             "," + c.term + "," + format_number(c.step_size) + "," +
             std::to_string(c.steps) + "," + c.status + "," + c.flag + "," +
             format_number(bw) + "," + format_number(mmd_bw) + "," +
             num(c.initial, &MetricReport::mmd) + "," +
             num(c.final, &MetricReport::mmd) + "," +
             num(c.initial, &MetricReport::modes_covered) + "," +
             num(c.final, &MetricReport::modes_covered) + "," +
             num(c.initial, &MetricReport::hq_fraction) + "," +
             num(c.final, &MetricReport::hq_fraction) + "," + err + "\n";
    }
    write_text(out / "ablation.csv", csv);

    // Single-term comparison at the refine defaults where the grid has them.
    auto pick = [](const auto& grid, auto preferred) {
      for (const auto& v : grid) {
        if (v == preferred) return v;
      }
      return grid.front();
    };
    const EstimatorMode est = pick(a.estimators, base.estimator);
    const double sigma = pick(a.sigmas, base.mollifier.sigma);
    const double step = pick(a.step_sizes, base.lambda1);
    const std::size_t steps = pick(a.steps, base.steps);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : cells) {
      if (c.estimator != est || c.sigma != sigma || c.step_size != step ||
          c.steps != steps) {
        continue;
      }
      nlohmann::json row = {{"term", c.term}, {"status", c.status}};
      if (c.initial) row["initial"] = metric_json(*c.initial);
      if (c.final) row["final"] = metric_json(*c.final);
      if (!c.error.empty()) row["error"] = c.error;
      rows.push_back(row);
    }
    write_json(out / "per_term_report.json",
               {{"seed", config.seed},
                {"estimator", to_string(est)},
                {"sigma", sigma},
                {"step_size", step},
                {"steps", steps},
                {"condition", cond.name()},
                {"rows", rows}});
    record_totals(recorder, totals);
    std::size_t failed = 0;
    for (const auto& c : cells) failed += c.status != "ok";
    recorder.add_diagnostic("failed_cells", static_cast<double>(failed));
    recorder.finish_ok();
    return cells;
  } catch (const Error& e) {
    recorder.finish_failed(e.kind(), e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------

bool VerifySummary::passed() const noexcept {
  if (!smoothing.passed() || !score_ok || !gradients.passed()) return false;
  for (const auto& k : krr) {
    if (!k.passed()) return false;
  }
  return true;
}

nlohmann::json krr_score_agreement(const RunConfig& config, double* max_diff) {
  const auto& v = config.verify;
  SeededRng rng = stream(config, Stream::Scores);
  SeededRng sample_rng = rng.child(0);
  SeededRng probe_rng = rng.child(1);
  SeededRng eps_rng = rng.child(2);
  const PointSet samples = gaussian_draws(sample_rng, v.score_samples, 2, 1.0);
  const PointSet probes = gaussian_draws(probe_rng, v.score_probes, 2, 1.0);
  KernelSpec kernel;
  kernel.bandwidth = median_feature_bandwidth(kernel.extractor, samples);
  kernel.mollifier = config.refine.flow.mollifier;
  kernel.mollifier.sigma_final.reset();
  const PointSet eps = mollifier_draws(eps_rng, 2, kernel.mollifier.sigma,
                                       kernel.mollifier.samples);
  const DensityEstimate krr = fit_krr(samples, kernel, v.score_eta, eps);
  const DensityEstimate kde = fit_kde(samples, kernel, eps);
  double worst = 0.0;
  nlohmann::json per_probe = nlohmann::json::array();
  for (const auto& x : probes) {
    const double d =
        (grad_log_density(krr, x) - grad_log_density(kde, x)).cwiseAbs().maxCoeff();
    worst = std::max(worst, d);
    per_probe.push_back(d);
  }
  if (max_diff) *max_diff = worst;
  return {{"eta", v.score_eta},
          {"samples", v.score_samples},
          {"bandwidth", kernel.bandwidth},
          {"max_abs_diff", worst},
          {"per_probe_max_abs_diff", per_probe},
          {"tolerance", v.score_tolerance},
          {"passed", worst < v.score_tolerance}};
}

std::vector<KrrLimitReport> krr_limit_suite(const RunConfig& config) {
  const auto& v = config.verify;
  SeededRng krr_rng = stream(config, Stream::KrrLimit);
  KernelSpec unit;
  std::vector<KrrLimitReport> out;
  for (std::size_t i = 0; i < v.krr_matrices; ++i) {
    SeededRng mrng = krr_rng.child(i);
    const PointSet pts = random_psd_points(mrng, v.krr_size);
    const PointSet no_eps{Vector::Zero(2)};
    out.push_back(verify_krr_limit(kernel_matrix(unit, pts, no_eps), v.krr_etas));
  }
  return out;
}

VerifySummary cmd_verify(const RunConfig& config, const fs::path& out) {
  RunRecorder recorder(out, "verify", config);
  try {
    recorder.write_manifest(nlohmann::json::object());
    const auto& v = config.verify;
    VerifySummary s;

    SeededRng smooth_rng = stream(config, Stream::Smoothing);
    s.smoothing = verify_smoothing(v.smoothing, smooth_rng);
    nlohmann::json sj = to_json(s.smoothing);
    sj["seed"] = config.seed;
    write_json(out / "reports" / "smoothing.json", sj);

    s.krr = krr_limit_suite(config);
    nlohmann::json matrices = nlohmann::json::array();
    for (const auto& r : s.krr) matrices.push_back(to_json(r));
    nlohmann::json kj = {{"seed", config.seed},
                         {"matrices", matrices},
                         {"score_agreement", krr_score_agreement(config, &s.score_max_diff)}};
    s.score_ok = s.score_max_diff < v.score_tolerance;
    write_json(out / "reports" / "krr_limit.json", kj);

    s.gradients = verify_gradients(derive_seed(config.seed, static_cast<std::uint64_t>(Stream::Gradients)),
                                   v.gradients);
    nlohmann::json gj = to_json(s.gradients);
    gj["seed"] = config.seed;
    write_json(out / "reports" / "gradients.json", gj);

    write_json(out / "reports" / "summary.json",
               {{"seed", config.seed},
                {"smoothing_passed", s.smoothing.passed()},
                {"krr_limit_passed",
                 std::all_of(s.krr.begin(), s.krr.end(),
                             [](const KrrLimitReport& r) { return r.passed(); })},
                {"score_agreement_passed", s.score_ok},
                {"gradients_passed", s.gradients.passed()},
                {"passed", s.passed()}});
    recorder.add_diagnostic("passed", s.passed() ? 1.0 : 0.0);
    recorder.finish_ok();
    return s;
  } catch (const Error& e) {
    recorder.finish_failed(e.kind(), e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------

DiscreteSummary cmd_discrete(const RunConfig& config, const fs::path& out) {
  RunRecorder recorder(out, "discrete", config);
  try {
    const auto& d = config.discrete;
    const GmmTarget target = GmmTarget::by_name(config.target);
    if (d.component >= target.size()) {
      throw ConfigInvalid("discrete.component: index out of range");
    }
    SeededRng rng = stream(config, Stream::Discrete);
    SeededRng net_rng = rng.child(kNetsStream);
    SeededRng cb_rng = rng.child(1);
    SeededRng run_rng = rng.child(2);
    const Codebook cb = Codebook::random(d.codebook_size, d.slot_dim, cb_rng);
    const MlpNet decoder = train_toy_decoder(
        cb, target,
        DecoderTrainConfig{d.flow.slots, d.decoder_hidden, d.decoder_steps, d.decoder_lr},
        net_rng);
    const ConditionModel cond(ComponentCondition{target, d.component, d.beta});
    recorder.write_manifest({{"codebook_size", cb.size()},
                             {"decoder_input_dim", decoder.input_dim()}});

    DiscreteSummary s;
    s.result = two_stage_refine(decoder, cb, cond, d.flow, run_rng);
    for (const auto& z : s.result.initial.slots) {
      s.initial_residual += quantize(cb, z).sq_distance;
    }
    for (const auto& z : s.result.warmup.slots) {
      s.warmup_residual += quantize(cb, z).sq_distance;
    }
    s.final_point = mlp_forward(decoder, s.result.final.concat());
    s.warmup_point = mlp_forward(decoder, s.result.warmup_quantized.concat());

    JsonlWriter trace(out / "discrete_trace.jsonl");
    for (const auto& e : s.result.trace) {
      trace.write({{"seed", config.seed},
                   {"stage", e.stage},
                   {"t", e.step},
                   {"objective", e.objective},
                   {"reg", e.reg},
                   {"residual", e.residual}});
    }
    bool on_codebook = true;
    nlohmann::json indices = nlohmann::json::array();
    for (const auto& z : s.result.final.slots) {
      const auto q = quantize(cb, z);
      on_codebook = on_codebook && q.sq_distance == 0.0 && q.entry == z;
      indices.push_back(q.index);
    }
    write_json(out / "discrete_report.json",
               {{"seed", config.seed},
                {"initial_residual", s.initial_residual},
                {"warmup_residual", s.warmup_residual},
                {"warmup_objective", s.result.warmup_objective},
                {"final_objective", s.result.final_objective},
                {"final_indices", indices},
                {"all_slots_on_codebook", on_codebook},
                {"final_point", vec_json(s.final_point)},
                {"warmup_point", vec_json(s.warmup_point)},
                {"final_component_posterior",
                 gmm_component_posterior(target, s.final_point)[static_cast<Eigen::Index>(d.component)]},
                {"warmup_component_posterior",
                 gmm_component_posterior(target, s.warmup_point)[static_cast<Eigen::Index>(d.component)]}});
    recorder.finish_ok();
    return s;
  } catch (const Error& e) {
    recorder.finish_failed(e.kind(), e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------

void cmd_report(const fs::path& trajectory, std::ostream& table,
                const fs::path& csv_path) {
  std::istringstream in(read_text(trajectory));
  static const std::vector<std::string> columns = {
      "t", "mmd", "modes_covered", "hq_fraction", "clamp_count_q",
      "clamp_count_p", "grad_norm_mean", "clip_events", "sigma_current"};
  std::string csv;
  std::string line;
  std::size_t row = 0;
  auto cell = [](const nlohmann::json& j, const std::string& key) -> std::string {
    if (!j.contains(key)) return "";
    const auto& v = j.at(key);
    if (v.is_number_float()) return format_number(v.get<double>());
    if (v.is_number()) return v.dump();
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoFailure("report: malformed JSON line " + std::to_string(row + 1));
    }
    if (row == 0) {
      csv = seed_header(j.value("seed", std::uint64_t{0}));
      for (std::size_t c = 0; c < columns.size(); ++c) {
        csv += columns[c] + (c + 1 < columns.size() ? "," : "\n");
        table << std::setw(c == 0 ? 4 : 15) << columns[c];
      }
      table << "\n";
    }
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string v = cell(j, columns[c]);
      csv += v + (c + 1 < columns.size() ? "," : "\n");
      std::string shown = v;
      if (j.contains(columns[c]) && j.at(columns[c]).is_number_float()) {
        std::ostringstream f;
        f << std::setprecision(6) << j.at(columns[c]).get<double>();
        shown = f.str();
      }
      table << std::setw(c == 0 ? 4 : 15) << shown;
    }
    table << "\n";
    ++row;
  }
  if (row == 0) throw IoFailure("report: empty trajectory");
  fs::path target = csv_path;
  if (target.empty()) target = fs::path(trajectory).replace_extension(".csv");
  write_text(target, csv);
}

}  // namespace gminf::app
