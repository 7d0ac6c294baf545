#include "gminf/nets.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gminf/errors.hpp"
#include "gminf/metrics.hpp"

namespace gminf {

namespace {

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input of each affine layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  Eigen::MatrixXd output;
};

void check_layer(const MlpNet& net, std::size_t layer) {
  if (layer < 1 || layer > net.depth()) {
    throw InvalidArgument("mlp: layer index out of range");
  }
}

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::Tanh) return z.array().tanh().matrix();
  return z.cwiseMax(0.0);
}

Eigen::MatrixXd activation_slope(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::Tanh) {
    return (1.0 - z.array().tanh().square()).matrix();
  }
  return (z.array() > 0.0).cast<double>().matrix();
}

ForwardCache forward(const MlpNet& net, const Eigen::MatrixXd& x,
                     std::size_t layer) {
  check_layer(net, layer);
  if (static_cast<std::size_t>(x.rows()) != net.input_dim()) {
    throw ShapeMismatch("mlp: input dimension does not match first layer");
  }
  ForwardCache cache;
  Eigen::MatrixXd h = x;
  for (std::size_t k = 0; k < layer; ++k) {
    const auto& l = net.layers()[k];
    Eigen::MatrixXd z = l.weight * h;
    z.colwise() += l.bias;
    cache.inputs.push_back(std::move(h));
    const bool hidden = k + 1 < net.depth();
    h = hidden ? activate(net.activation(), z) : z;
    cache.pre.push_back(std::move(z));
  }
  cache.output = std::move(h);
  return cache;
}

MlpBatchVjp backward(const MlpNet& net, const ForwardCache& cache,
                     const Eigen::MatrixXd& u, bool with_params) {
  const std::size_t layer = cache.pre.size();
  MlpBatchVjp out;
  if (with_params) {
    out.grad_params.resize(net.depth());
    for (std::size_t k = 0; k < net.depth(); ++k) {
      const auto& l = net.layers()[k];
      out.grad_params[k].weight = Eigen::MatrixXd::Zero(l.weight.rows(),
                                                        l.weight.cols());
      out.grad_params[k].bias = Vector::Zero(l.bias.size());
    }
  }
  Eigen::MatrixXd g = u;
  for (std::size_t k = layer; k-- > 0;) {
    const auto& l = net.layers()[k];
    if (k + 1 < net.depth()) {
      g = g.cwiseProduct(activation_slope(net.activation(), cache.pre[k]));
    }
    if (with_params) {
      out.grad_params[k].weight = g * cache.inputs[k].transpose();
      out.grad_params[k].bias = g.rowwise().sum();
    }
    g = l.weight.transpose() * g;
  }
  out.grad_input = std::move(g);
  return out;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  std::array<char, sizeof(T)> buf{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) &
                               0xffu);
  }
  out.write(buf.data(), buf.size());
}

void put_f64(std::ostream& out, double v) {
  put_le(out, std::bit_cast<std::uint64_t>(v));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw IoFailure("load_net: truncated file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in));
}

constexpr std::array<char, 8> kMagic = {'G', 'M', 'I', 'N', 'F', 'N', 'E', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

double softplus(double v) {
  return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

bool params_finite(const MlpNet& net) {
  for (const auto& l : net.layers()) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Eigen::MatrixXd normal_matrix(SeededRng& rng, Eigen::Index rows,
                              Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

}  // namespace

const char* to_string(Activation a) noexcept {
  return a == Activation::Tanh ? "tanh" : "relu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw InvalidArgument("unknown activation '" + name + "'");
}

MlpNet::MlpNet(std::vector<std::size_t> sizes, Activation activation)
    : sizes_(std::move(sizes)), activation_(activation) {
  if (sizes_.size() < 2) {
    throw InvalidArgument("MlpNet: need at least input and output sizes");
  }
  for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
    if (sizes_[k] == 0 || sizes_[k + 1] == 0) {
      throw InvalidArgument("MlpNet: layer sizes must be positive");
    }
    const auto out = static_cast<Eigen::Index>(sizes_[k + 1]);
    const auto in = static_cast<Eigen::Index>(sizes_[k]);
    layers_.push_back({Eigen::MatrixXd::Zero(out, in), Vector::Zero(out)});
  }
}

MlpNet MlpNet::random(std::vector<std::size_t> sizes, Activation activation,
                      SeededRng& rng) {
  MlpNet net(std::move(sizes), activation);
  for (auto& l : net.layers_) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
        l.weight(i, j) = scale * rng.normal();
      }
    }
  }
  return net;
}

std::size_t MlpNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  }
  return n;
}

bool MlpNet::operator==(const MlpNet& other) const {
  if (sizes_ != other.sizes_ || activation_ != other.activation_) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].weight != other.layers_[k].weight ||
        layers_[k].bias != other.layers_[k].bias) {
      return false;
    }
  }
  return true;
}

Vector mlp_forward(const MlpNet& net, const Vector& x) {
  return mlp_layer_output(net, x, net.depth());
}

Vector mlp_layer_output(const MlpNet& net, const Vector& x, std::size_t layer) {
  return forward(net, x, layer).output.col(0);
}

MlpVjp mlp_vjp(const MlpNet& net, const Vector& x, const Vector& u) {
  if (static_cast<std::size_t>(u.size()) != net.output_dim()) {
    throw ShapeMismatch("mlp_vjp: cotangent does not match output dimension");
  }
  const auto cache = forward(net, x, net.depth());
  auto b = backward(net, cache, u, true);
  return {b.grad_input.col(0), std::move(b.grad_params)};
}

Vector mlp_input_vjp(const MlpNet& net, const Vector& x, const Vector& u,
                     std::size_t layer) {
  check_layer(net, layer);
  if (static_cast<std::size_t>(u.size()) != net.sizes()[layer]) {
    throw ShapeMismatch("mlp_input_vjp: cotangent does not match layer width");
  }
  const auto cache = forward(net, x, layer);
  return backward(net, cache, u, false).grad_input.col(0);
}

Eigen::MatrixXd mlp_forward_batch(const MlpNet& net, const Eigen::MatrixXd& x,
                                  std::size_t layer) {
  return forward(net, x, layer).output;
}

Eigen::MatrixXd mlp_forward_batch(const MlpNet& net, const Eigen::MatrixXd& x) {
  return forward(net, x, net.depth()).output;
}

MlpBatchVjp mlp_vjp_batch(const MlpNet& net, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& u, bool with_params) {
  if (static_cast<std::size_t>(u.rows()) != net.output_dim() ||
      u.cols() != x.cols()) {
    throw ShapeMismatch("mlp_vjp_batch: cotangent shape mismatch");
  }
  const auto cache = forward(net, x, net.depth());
  return backward(net, cache, u, with_params);
}

Eigen::MatrixXd to_matrix(const PointSet& points) {
  if (points.empty()) return {};
  Eigen::MatrixXd m(points.front().size(),
                    static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != m.rows()) {
      throw ShapeMismatch("to_matrix: points differ in dimension");
    }
    m.col(static_cast<Eigen::Index>(i)) = points[i];
  }
  return m;
}

PointSet to_points(const Eigen::MatrixXd& columns) {
  PointSet out;
  out.reserve(static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    out.emplace_back(columns.col(j));
  }
  return out;
}

AdamState::AdamState(const MlpNet& net, AdamConfig config) : config_(config) {
  for (const auto& l : net.layers()) {
    DenseLayer zero{Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                    Vector::Zero(l.bias.size())};
    first_.push_back(zero);
    second_.push_back(std::move(zero));
  }
}

void AdamState::step(MlpNet& net, const MlpParams& grads) {
  if (grads.size() != net.depth() || first_.size() != net.depth()) {
    throw ShapeMismatch("AdamState::step: parameter shape mismatch");
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    param.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < net.depth(); ++k) {
    auto& l = net.layers()[k];
    update(l.weight, grads[k].weight, first_[k].weight, second_[k].weight);
    update(l.bias, grads[k].bias, first_[k].bias, second_[k].bias);
  }
}

void GanTrainConfig::validate() const {
  if (latent_dim < 1) throw InvalidArgument("gan: latent_dim must be >= 1");
  if (hidden < 1) throw InvalidArgument("gan: hidden must be >= 1");
  if (batch < 1) throw InvalidArgument("gan: batch must be >= 1");
  if (!(generator_lr > 0.0) || !(discriminator_lr > 0.0)) {
    throw InvalidArgument("gan: learning rates must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("gan: Adam betas must lie in [0, 1)");
  }
  if (history_every < 1) throw InvalidArgument("gan: history_every >= 1");
  if (history_samples < 2) throw InvalidArgument("gan: history_samples >= 2");
}

GanResult train_toy_gan(const GmmTarget& target, const GanTrainConfig& config,
                        SeededRng& rng) {
  config.validate();
  const std::size_t dim = target.dim();
  const std::size_t h = config.hidden;
  MlpNet gen = MlpNet::random({config.latent_dim, h, h, dim},
                              config.generator_activation, rng);
  MlpNet disc = MlpNet::random({dim, h, h, 1},
                               config.discriminator_activation, rng);
  AdamState gen_opt(gen, {config.generator_lr, config.beta1, config.beta2});
  AdamState disc_opt(disc,
                     {config.discriminator_lr, config.beta1, config.beta2});

  const std::size_t total =
      config.early_stop ? std::min(config.steps, *config.early_stop)
                        : config.steps;
  const auto batch = static_cast<Eigen::Index>(config.batch);
  const double inv_b = 1.0 / static_cast<double>(config.batch);

  SeededRng eval_rng = rng.child(0x6576616c);
  const PointSet eval_real = gmm_sample(target, config.history_samples,
                                        eval_rng);
  const Eigen::MatrixXd eval_z = normal_matrix(
      eval_rng, static_cast<Eigen::Index>(config.latent_dim),
      static_cast<Eigen::Index>(config.history_samples));

  GanResult result{gen, disc, {}, 0};
  auto record = [&](std::size_t step, double d_loss, double g_loss) {
    const PointSet fake = to_points(mlp_forward_batch(gen, eval_z));
    const double bw = median_bandwidth(fake, eval_real);
    result.history.push_back({step, d_loss, g_loss, mmd(fake, eval_real, bw)});
  };
  record(0, std::nan(""), std::nan(""));

  for (std::size_t step = 1; step <= total; ++step) {
    const Eigen::MatrixXd real = to_matrix(gmm_sample(target, config.batch, rng));
    const Eigen::MatrixXd z = normal_matrix(
        rng, static_cast<Eigen::Index>(config.latent_dim), batch);
    const Eigen::MatrixXd fake = mlp_forward_batch(gen, z);

    // Discriminator: minimize softplus(-d(real)) + softplus(d(fake)).
    const Eigen::MatrixXd lr = mlp_forward_batch(disc, real);
    const Eigen::MatrixXd lf = mlp_forward_batch(disc, fake);
    Eigen::MatrixXd ur(1, batch);
    Eigen::MatrixXd uf(1, batch);
    double d_loss = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      d_loss += softplus(-lr(0, j)) + softplus(lf(0, j));
      ur(0, j) = -sigmoid(-lr(0, j)) * inv_b;
      uf(0, j) = sigmoid(lf(0, j)) * inv_b;
    }
    d_loss *= inv_b;
    auto gr = mlp_vjp_batch(disc, real, ur);
    const auto gf = mlp_vjp_batch(disc, fake, uf);
    for (std::size_t k = 0; k < disc.depth(); ++k) {
      gr.grad_params[k].weight += gf.grad_params[k].weight;
      gr.grad_params[k].bias += gf.grad_params[k].bias;
    }
    disc_opt.step(disc, gr.grad_params);

    // Generator: non-saturating loss softplus(-d(g(z))).
    const Eigen::MatrixXd lg = mlp_forward_batch(disc, fake);
    Eigen::MatrixXd ug(1, batch);
    double g_loss = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      g_loss += softplus(-lg(0, j));
      ug(0, j) = -sigmoid(-lg(0, j)) * inv_b;
    }
    g_loss *= inv_b;
    const auto dx = mlp_vjp_batch(disc, fake, ug, false);
    const auto gg = mlp_vjp_batch(gen, z, dx.grad_input);
    gen_opt.step(gen, gg.grad_params);

    if (!std::isfinite(d_loss) || !std::isfinite(g_loss) ||
        !params_finite(gen) || !params_finite(disc)) {
      std::ostringstream msg;
      msg << "train_toy_gan: non-finite loss or parameters at step " << step;
      throw DivergedTraining(msg.str());
    }
    if (step % config.history_every == 0 || step == total) {
      record(step, d_loss, g_loss);
    }
  }
  result.generator = std::move(gen);
  result.discriminator = std::move(disc);
  result.steps_run = total;
  return result;
}

void save_net(const MlpNet& net, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.activation()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.sizes().size()));
  for (auto s : net.sizes()) put_le<std::uint64_t>(out, s);
  for (const auto& l : net.layers()) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
        put_f64(out, l.weight(i, j));
      }
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) put_f64(out, l.bias[i]);
  }
  if (!out) throw IoFailure("save_net: write failed");
}

MlpNet load_net(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoFailure("load_net: bad magic");
  if (get_le<std::uint32_t>(in) != kFormatVersion) {
    throw IoFailure("load_net: unsupported format version");
  }
  const auto act = get_le<std::uint32_t>(in);
  if (act > 1) throw IoFailure("load_net: unknown activation");
  const auto count = get_le<std::uint32_t>(in);
  if (count < 2 || count > 64) throw IoFailure("load_net: bad layer count");
  std::vector<std::size_t> sizes(count);
  for (auto& s : sizes) {
    s = get_le<std::uint64_t>(in);
    if (s == 0 || s > (1u << 20)) throw IoFailure("load_net: bad layer size");
  }
  MlpNet net(sizes, static_cast<Activation>(act));
  for (auto& l : net.layers()) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
        l.weight(i, j) = get_f64(in);
      }
    }
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = get_f64(in);
  }
  return net;
}

void save_net(const MlpNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("save_net: cannot open " + path);
  save_net(net, out);
}

MlpNet load_net(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("load_net: cannot open " + path);
  return load_net(in);
}

}  // namespace gminf
