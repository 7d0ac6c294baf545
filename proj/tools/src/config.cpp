#include "gminf_app/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gminf/errors.hpp"

namespace gminf::app {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(std::size_t v) { return std::to_string(v); }

template <class T, class F>
std::string join(const std::vector<T>& values, F f) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += f(values[i]);
  }
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw InvalidArgument("expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw InvalidArgument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

std::size_t to_size(const std::string& s) {
  return static_cast<std::size_t>(to_u64(s));
}

bool to_bool(const std::string& s) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw InvalidArgument("expected a boolean, got '" + s + "'");
}

Activation to_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw InvalidArgument("expected tanh or relu, got '" + s + "'");
}

const char* activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

std::string one_of(const std::string& s,
                   std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (s == a) return s;
  }
  std::string msg = "expected one of";
  for (const char* a : allowed) msg += std::string(" ") + a;
  throw InvalidArgument(msg + ", got '" + s + "'");
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) out.push_back(to_double(item));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) out.push_back(to_size(item));
  return out;
}

struct Binding {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define GMINF_DOUBLE(SEC, KEY, FIELD)                                      \
  Binding{SEC, KEY, [](RunConfig& c, const std::string& v) {              \
            c.FIELD = to_double(v);                                        \
          },                                                               \
          [](const RunConfig& c) { return fmt(c.FIELD); }}
#define GMINF_SIZE(SEC, KEY, FIELD)                                        \
  Binding{SEC, KEY, [](RunConfig& c, const std::string& v) {              \
            c.FIELD = to_size(v);                                          \
          },                                                               \
          [](const RunConfig& c) { return fmt(c.FIELD); }}
#define GMINF_STRING(SEC, KEY, FIELD)                                      \
  Binding{SEC, KEY, [](RunConfig& c, const std::string& v) {              \
            c.FIELD = trim(v);                                             \
          },                                                               \
          [](const RunConfig& c) { return c.FIELD; }}
#define GMINF_DOUBLES(SEC, KEY, FIELD)                                     \
  Binding{SEC, KEY, [](RunConfig& c, const std::string& v) {              \
            c.FIELD = to_doubles(v);                                       \
          },                                                               \
          [](const RunConfig& c) {                                         \
            return join(c.FIELD, [](double d) { return fmt(d); });         \
          }}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      Binding{"", "seed",
              [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
              [](const RunConfig& c) { return std::to_string(c.seed); }},
      GMINF_STRING("", "out", out),
      Binding{"", "target",
              [](RunConfig& c, const std::string& v) {
                c.target = one_of(trim(v), {"ring8", "grid25", "gauss1"});
              },
              [](const RunConfig& c) { return c.target; }},

      GMINF_SIZE("gan", "latent_dim", gan.latent_dim),
      GMINF_SIZE("gan", "hidden", gan.hidden),
      Binding{"gan", "generator_activation",
              [](RunConfig& c, const std::string& v) {
                c.gan.generator_activation = to_activation(trim(v));
              },
              [](const RunConfig& c) {
                return std::string(activation_name(c.gan.generator_activation));
              }},
      Binding{"gan", "discriminator_activation",
              [](RunConfig& c, const std::string& v) {
                c.gan.discriminator_activation = to_activation(trim(v));
              },
              [](const RunConfig& c) {
                return std::string(
                    activation_name(c.gan.discriminator_activation));
              }},
      GMINF_DOUBLE("gan", "generator_lr", gan.generator_lr),
      GMINF_DOUBLE("gan", "discriminator_lr", gan.discriminator_lr),
      GMINF_DOUBLE("gan", "beta1", gan.beta1),
      GMINF_DOUBLE("gan", "beta2", gan.beta2),
      GMINF_SIZE("gan", "batch", gan.batch),
      GMINF_SIZE("gan", "steps", gan.steps),
      Binding{"gan", "early_stop",
              [](RunConfig& c, const std::string& v) {
                if (trim(v) == "none") {
                  c.gan.early_stop.reset();
                } else {
                  c.gan.early_stop = to_size(v);
                }
              },
              [](const RunConfig& c) {
                return c.gan.early_stop ? fmt(*c.gan.early_stop)
                                        : std::string("none");
              }},
      GMINF_SIZE("gan", "history_every", gan.history_every),
      GMINF_SIZE("gan", "history_samples", gan.history_samples),

      GMINF_SIZE("eval", "reference_samples", eval.reference_samples),
      GMINF_DOUBLE("eval", "hq_radius", eval.hq_radius),
      GMINF_DOUBLE("eval", "mmd_bandwidth", eval.mmd_bandwidth),

      GMINF_DOUBLE("refine", "lambda1", refine.flow.lambda1),
      GMINF_DOUBLE("refine", "lambda2", refine.flow.lambda2),
      GMINF_DOUBLE("refine", "lambda3", refine.flow.lambda3),
      GMINF_SIZE("refine", "steps", refine.flow.steps),
      GMINF_SIZE("refine", "particles", refine.flow.particles),
      Binding{"refine", "features",
              [](RunConfig& c, const std::string& v) {
                c.refine.flow.features = feature_source_from_string(trim(v));
              },
              [](const RunConfig& c) {
                return std::string(to_string(c.refine.flow.features));
              }},
      Binding{"refine", "bandwidth",
              [](RunConfig& c, const std::string& v) {
                if (trim(v) == "median") {
                  c.refine.flow.bandwidth.reset();
                } else {
                  c.refine.flow.bandwidth = to_double(v);
                }
              },
              [](const RunConfig& c) {
                return c.refine.flow.bandwidth ? fmt(*c.refine.flow.bandwidth)
                                               : std::string("median");
              }},
      GMINF_DOUBLE("refine", "sigma", refine.flow.mollifier.sigma),
      GMINF_SIZE("refine", "mollifier_samples", refine.flow.mollifier.samples),
      Binding{"refine", "sigma_final",
              [](RunConfig& c, const std::string& v) {
                if (trim(v) == "none") {
                  c.refine.flow.mollifier.sigma_final.reset();
                } else {
                  c.refine.flow.mollifier.sigma_final = to_double(v);
                }
              },
              [](const RunConfig& c) {
                const auto& f = c.refine.flow.mollifier.sigma_final;
                return f ? fmt(*f) : std::string("none");
              }},
      GMINF_DOUBLE("refine", "ridge_q", refine.flow.ridge_q),
      GMINF_DOUBLE("refine", "ridge_p", refine.flow.ridge_p),
      Binding{"refine", "estimator",
              [](RunConfig& c, const std::string& v) {
                c.refine.flow.estimator = estimator_mode_from_string(trim(v));
              },
              [](const RunConfig& c) {
                return std::string(to_string(c.refine.flow.estimator));
              }},
      GMINF_SIZE("refine", "target_samples", refine.flow.target_samples),
      GMINF_DOUBLE("refine", "clip_factor", refine.flow.clip_factor),
      Binding{"refine", "generator",
              [](RunConfig& c, const std::string& v) {
                c.refine.generator = one_of(trim(v), {"mlp", "identity"});
              },
              [](const RunConfig& c) { return c.refine.generator; }},
      GMINF_STRING("refine", "generator_file", refine.generator_file),
      GMINF_STRING("refine", "discriminator_file", refine.discriminator_file),
      Binding{"refine", "condition",
              [](RunConfig& c, const std::string& v) {
                c.refine.condition.kind = one_of(
                    trim(v), {"none", "discriminator", "mask", "component"});
              },
              [](const RunConfig& c) { return c.refine.condition.kind; }},
      Binding{"refine", "mask_observed",
              [](RunConfig& c, const std::string& v) {
                c.refine.condition.mask_observed = to_sizes(v);
              },
              [](const RunConfig& c) {
                return join(c.refine.condition.mask_observed,
                            [](std::size_t i) { return fmt(i); });
              }},
      GMINF_DOUBLES("refine", "mask_values", refine.condition.mask_values),
      GMINF_DOUBLE("refine", "mask_tau", refine.condition.mask_tau),
      GMINF_SIZE("refine", "component", refine.condition.component),
      GMINF_DOUBLE("refine", "beta", refine.condition.beta),

      Binding{"ablate", "estimators",
              [](RunConfig& c, const std::string& v) {
                c.ablate.estimators.clear();
                for (const auto& s : split_list(v)) {
                  c.ablate.estimators.push_back(estimator_mode_from_string(s));
                }
              },
              [](const RunConfig& c) {
                return join(c.ablate.estimators, [](EstimatorMode m) {
                  return std::string(to_string(m));
                });
              }},
      GMINF_DOUBLES("ablate", "sigmas", ablate.sigmas),
      Binding{"ablate", "terms",
              [](RunConfig& c, const std::string& v) {
                c.ablate.terms.clear();
                for (const auto& s : split_list(v)) {
                  c.ablate.terms.push_back(one_of(s, {"all", "q", "p", "c"}));
                }
              },
              [](const RunConfig& c) {
                return join(c.ablate.terms, [](const std::string& s) { return s; });
              }},
      GMINF_DOUBLES("ablate", "step_sizes", ablate.step_sizes),
      Binding{"ablate", "steps",
              [](RunConfig& c, const std::string& v) {
                c.ablate.steps = to_sizes(v);
              },
              [](const RunConfig& c) {
                return join(c.ablate.steps, [](std::size_t i) { return fmt(i); });
              }},
      Binding{"ablate", "condition",
              [](RunConfig& c, const std::string& v) {
                c.ablate.condition = one_of(trim(v), {"none", "discriminator"});
              },
              [](const RunConfig& c) { return c.ablate.condition; }},

      GMINF_DOUBLE("verify", "smoothing_bandwidth", verify.smoothing.bandwidth),
      GMINF_DOUBLES("verify", "sigma_grid", verify.smoothing.sigma_grid),
      GMINF_SIZE("verify", "mc_samples", verify.smoothing.mc_samples),
      GMINF_SIZE("verify", "probes", verify.smoothing.probes),
      GMINF_SIZE("verify", "dim", verify.smoothing.dim),
      GMINF_DOUBLE("verify", "max_std_errors", verify.smoothing.max_std_errors),
      GMINF_DOUBLE("verify", "slope_low", verify.smoothing.slope_low),
      GMINF_DOUBLE("verify", "slope_high", verify.smoothing.slope_high),
      GMINF_DOUBLES("verify", "krr_etas", verify.krr_etas),
      GMINF_SIZE("verify", "krr_matrices", verify.krr_matrices),
      GMINF_SIZE("verify", "krr_size", verify.krr_size),
      GMINF_SIZE("verify", "score_samples", verify.score_samples),
      GMINF_SIZE("verify", "score_probes", verify.score_probes),
      GMINF_DOUBLE("verify", "score_eta", verify.score_eta),
      GMINF_DOUBLE("verify", "score_tolerance", verify.score_tolerance),
      GMINF_DOUBLE("verify", "grad_tolerance", verify.gradients.tolerance),
      GMINF_DOUBLE("verify", "fd_step", verify.gradients.fd_step),
      GMINF_SIZE("verify", "grad_probes", verify.gradients.probes),

      GMINF_DOUBLE("discrete", "alpha_reg", discrete.flow.alpha_reg),
      GMINF_SIZE("discrete", "warmup_steps", discrete.flow.warmup_steps),
      GMINF_SIZE("discrete", "finetune_steps", discrete.flow.finetune_steps),
      GMINF_DOUBLE("discrete", "lambda2", discrete.flow.lambda2),
      GMINF_DOUBLE("discrete", "lambda3", discrete.flow.lambda3),
      GMINF_DOUBLE("discrete", "clip_factor", discrete.flow.clip_factor),
      Binding{"discrete", "requantize_each_call",
              [](RunConfig& c, const std::string& v) {
                c.discrete.flow.requantize_each_call = to_bool(v);
              },
              [](const RunConfig& c) {
                return std::string(c.discrete.flow.requantize_each_call
                                       ? "true"
                                       : "false");
              }},
      GMINF_SIZE("discrete", "slots", discrete.flow.slots),
      GMINF_SIZE("discrete", "codebook_size", discrete.codebook_size),
      GMINF_SIZE("discrete", "slot_dim", discrete.slot_dim),
      GMINF_SIZE("discrete", "decoder_hidden", discrete.decoder_hidden),
      GMINF_SIZE("discrete", "decoder_steps", discrete.decoder_steps),
      GMINF_DOUBLE("discrete", "decoder_lr", discrete.decoder_lr),
      GMINF_SIZE("discrete", "component", discrete.component),
      GMINF_DOUBLE("discrete", "beta", discrete.beta),
  };
  return table;
}

#undef GMINF_DOUBLE
#undef GMINF_SIZE
#undef GMINF_STRING
#undef GMINF_DOUBLES

const Binding* find_binding(const std::string& section, const std::string& key) {
  for (const auto& b : bindings()) {
    if (section == b.section && key == b.key) return &b;
  }
  return nullptr;
}

std::string qualified(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigInvalid(key + ": " + what);
}

}  // namespace

void RunConfig::validate() const {
  require(gan.latent_dim >= 1, "gan.latent_dim", "must be >= 1");
  require(gan.hidden >= 1, "gan.hidden", "must be >= 1");
  require(gan.batch >= 1, "gan.batch", "must be >= 1");
  require(gan.generator_lr > 0.0, "gan.generator_lr", "must be > 0");
  require(gan.discriminator_lr > 0.0, "gan.discriminator_lr", "must be > 0");
  require(gan.beta1 >= 0.0 && gan.beta1 < 1.0, "gan.beta1", "must be in [0, 1)");
  require(gan.beta2 >= 0.0 && gan.beta2 < 1.0, "gan.beta2", "must be in [0, 1)");
  require(gan.history_every >= 1, "gan.history_every", "must be >= 1");
  require(gan.history_samples >= 2, "gan.history_samples", "must be >= 2");

  require(eval.reference_samples >= 2, "eval.reference_samples", "must be >= 2");

  const auto& f = refine.flow;
  require(f.lambda1 >= 0.0, "refine.lambda1", "must be >= 0");
  require(f.lambda2 >= 0.0, "refine.lambda2", "must be >= 0");
  require(f.lambda3 >= 0.0, "refine.lambda3", "must be >= 0");
  require(f.particles >= 2, "refine.particles", "must be >= 2");
  require(!f.bandwidth || *f.bandwidth > 0.0, "refine.bandwidth", "must be > 0");
  require(f.mollifier.sigma >= 0.0, "refine.sigma", "must be >= 0");
  require(f.mollifier.samples >= 1, "refine.mollifier_samples", "must be >= 1");
  require(!f.mollifier.sigma_final ||
              (*f.mollifier.sigma_final >= 0.0 &&
               *f.mollifier.sigma_final <= f.mollifier.sigma),
          "refine.sigma_final", "must be in [0, sigma]");
  require(f.ridge_q > 0.0, "refine.ridge_q", "must be > 0");
  require(f.ridge_p > 0.0, "refine.ridge_p", "must be > 0");
  require(f.target_samples >= 1, "refine.target_samples", "must be >= 1");
  require(f.clip_factor > 0.0, "refine.clip_factor", "must be > 0");
  require(refine.generator_file.empty() == refine.discriminator_file.empty(),
          "refine.generator_file",
          "generator_file and discriminator_file must be given together");
  const auto& c = refine.condition;
  require(c.mask_tau > 0.0, "refine.mask_tau", "must be > 0");
  require(c.beta >= 0.0, "refine.beta", "must be >= 0");
  if (c.kind == "mask") {
    require(!c.mask_observed.empty() &&
                c.mask_observed.size() == c.mask_values.size(),
            "refine.mask_values", "must match mask_observed in length");
  }

  require(!ablate.estimators.empty(), "ablate.estimators", "must be non-empty");
  require(!ablate.sigmas.empty(), "ablate.sigmas", "must be non-empty");
  for (double s : ablate.sigmas) require(s >= 0.0, "ablate.sigmas", "must be >= 0");
  require(!ablate.terms.empty(), "ablate.terms", "must be non-empty");
  require(!ablate.step_sizes.empty(), "ablate.step_sizes", "must be non-empty");
  for (double s : ablate.step_sizes) {
    require(s >= 0.0, "ablate.step_sizes", "must be >= 0");
  }
  require(!ablate.steps.empty(), "ablate.steps", "must be non-empty");

  const auto& v = verify;
  require(v.smoothing.bandwidth > 0.0, "verify.smoothing_bandwidth", "must be > 0");
  for (std::size_t i = 0; i < v.smoothing.sigma_grid.size(); ++i) {
    require(v.smoothing.sigma_grid[i] > 0.0, "verify.sigma_grid",
            "values must be > 0");
    require(i == 0 || v.smoothing.sigma_grid[i] > v.smoothing.sigma_grid[i - 1],
            "verify.sigma_grid", "must be strictly increasing");
  }
  require(v.smoothing.mc_samples >= 10000, "verify.mc_samples", "must be >= 10000");
  require(v.smoothing.probes >= 1, "verify.probes", "must be >= 1");
  require(v.smoothing.dim >= 1, "verify.dim", "must be >= 1");
  require(v.krr_etas.size() >= 2, "verify.krr_etas", "need at least two values");
  for (std::size_t i = 0; i < v.krr_etas.size(); ++i) {
    require(v.krr_etas[i] > 0.0, "verify.krr_etas", "values must be > 0");
    require(i == 0 || v.krr_etas[i] > v.krr_etas[i - 1], "verify.krr_etas",
            "must be strictly increasing");
  }
  require(v.krr_matrices >= 1, "verify.krr_matrices", "must be >= 1");
  require(v.krr_size >= 1, "verify.krr_size", "must be >= 1");
  require(v.score_samples >= 2, "verify.score_samples", "must be >= 2");
  require(v.score_probes >= 1, "verify.score_probes", "must be >= 1");
  require(v.score_eta > 0.0, "verify.score_eta", "must be > 0");
  require(v.gradients.tolerance > 0.0, "verify.grad_tolerance", "must be > 0");
  require(v.gradients.fd_step > 0.0, "verify.fd_step", "must be > 0");
  require(v.gradients.probes >= 1, "verify.grad_probes", "must be >= 1");

  const auto& d = discrete;
  require(d.flow.alpha_reg >= 0.0, "discrete.alpha_reg", "must be >= 0");
  require(d.flow.lambda2 >= 0.0, "discrete.lambda2", "must be >= 0");
  require(d.flow.lambda3 >= 0.0, "discrete.lambda3", "must be >= 0");
  require(d.flow.clip_factor > 0.0, "discrete.clip_factor", "must be > 0");
  require(d.flow.slots >= 1, "discrete.slots", "must be >= 1");
  require(d.codebook_size >= 2, "discrete.codebook_size", "must be >= 2");
  require(d.slot_dim >= 1, "discrete.slot_dim", "must be >= 1");
  require(d.decoder_hidden >= 1, "discrete.decoder_hidden", "must be >= 1");
  require(d.beta >= 0.0, "discrete.beta", "must be >= 0");
  require(d.decoder_lr > 0.0, "discrete.decoder_lr", "must be > 0");
}

void set_config_value(RunConfig& config, const std::string& section,
                      const std::string& key, const std::string& value) {
  const auto name = qualified(section, key);
  const Binding* b = find_binding(section, key);
  if (!b) throw ConfigInvalid(name + ": unknown key");
  try {
    b->set(config, value);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigInvalid) throw;
    throw ConfigInvalid(name + ": " + e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigInvalid(std::string("config: ") + e.what());
  }
  RunConfig config;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      set_config_value(config, "", name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ConfigInvalid(qualified(name, key) + ": nested key");
      set_config_value(config, name, key, leaf.data());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_ini(const RunConfig& config) {
  std::string out;
  std::string current;
  bool first = true;
  for (const auto& b : bindings()) {
    if (first || current != b.section) {
      if (*b.section) out += std::string(first ? "" : "\n") + "[" + b.section + "]\n";
      current = b.section;
      first = false;
    }
    out += std::string(b.key) + " = " + b.get(config) + "\n";
  }
  return out;
}

nlohmann::json to_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& b : bindings()) {
    if (*b.section) {
      j[b.section][b.key] = b.get(config);
    } else {
      j[b.key] = b.get(config);
    }
  }
  return j;
}

SeededRng stream(const RunConfig& config, Stream s) {
  return SeededRng(derive_seed(config.seed, static_cast<std::uint64_t>(s)));
}

}  // namespace gminf::app
