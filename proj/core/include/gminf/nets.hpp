#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gminf/numerics.hpp"
#include "gminf/targets.hpp"

namespace gminf {

enum class Activation : std::uint32_t { Tanh = 0, Relu = 1 };

const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Vector bias;             // out
};

using MlpParams = std::vector<DenseLayer>;

/// Fully connected network: hidden activation after every layer except the
/// last, identity on the output.
///
/// Two roles in this library. As the generator it maps latent codes to data
/// points. As the discriminator its scalar output is a logit d(x), used by
/// the discriminator condition, while the activations of its last hidden
/// layer serve as the feature map for kernels.
class MlpNet {
 public:
  /// Zero-initialized weights and biases. `sizes` lists layer widths from
  /// input to output and needs at least two entries.
  MlpNet(std::vector<std::size_t> sizes, Activation activation);

  /// Weights drawn N(0, 1/fan_in), biases zero.
  static MlpNet random(std::vector<std::size_t> sizes, Activation activation,
                       SeededRng& rng);

  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  Activation activation() const noexcept { return activation_; }
  std::size_t input_dim() const noexcept { return sizes_.front(); }
  std::size_t output_dim() const noexcept { return sizes_.back(); }
  /// Number of affine layers.
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t parameter_count() const noexcept;

  MlpParams& layers() noexcept { return layers_; }
  const MlpParams& layers() const noexcept { return layers_; }

  bool operator==(const MlpNet& other) const;

 private:
  std::vector<std::size_t> sizes_;
  Activation activation_;
  MlpParams layers_;
};

Vector mlp_forward(const MlpNet& net, const Vector& x);

/// Output of affine layer `layer` (1-based) after its activation; `layer ==
/// depth()` gives the network output.
Vector mlp_layer_output(const MlpNet& net, const Vector& x, std::size_t layer);

struct MlpVjp {
  Vector grad_input;
  MlpParams grad_params;
};

/// uᵀ·∂output/∂input and uᵀ·∂output/∂params by reverse accumulation.
MlpVjp mlp_vjp(const MlpNet& net, const Vector& x, const Vector& u);

/// Input gradient only, with `u` living at the output of `layer`.
Vector mlp_input_vjp(const MlpNet& net, const Vector& x, const Vector& u,
                     std::size_t layer);

// Batched variants: one sample per column.
Eigen::MatrixXd mlp_forward_batch(const MlpNet& net, const Eigen::MatrixXd& x,
                                  std::size_t layer);
Eigen::MatrixXd mlp_forward_batch(const MlpNet& net, const Eigen::MatrixXd& x);

struct MlpBatchVjp {
  Eigen::MatrixXd grad_input;
  MlpParams grad_params;  // summed over the batch
};

MlpBatchVjp mlp_vjp_batch(const MlpNet& net, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& u, bool with_params = true);

Eigen::MatrixXd to_matrix(const PointSet& points);
PointSet to_points(const Eigen::MatrixXd& columns);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState(const MlpNet& net, AdamConfig config);

  void step(MlpNet& net, const MlpParams& grads);

  std::uint64_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  MlpParams first_;
  MlpParams second_;
  std::uint64_t steps_ = 0;
};

struct GanTrainConfig {
  std::size_t latent_dim = 2;
  std::size_t hidden = 64;
  Activation generator_activation = Activation::Tanh;
  Activation discriminator_activation = Activation::Tanh;
  double generator_lr = 1e-3;
  double discriminator_lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::size_t batch = 256;
  std::size_t steps = 2000;
  /// Stop after this many steps even if `steps` is larger. The default
  /// under-fits ring8 so that refinement has headroom.
  std::optional<std::size_t> early_stop = 600;
  std::size_t history_every = 100;
  std::size_t history_samples = 512;

  void validate() const;
};

struct GanHistoryEntry {
  std::size_t step = 0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
  double mmd = 0.0;
};

struct GanResult {
  MlpNet generator;
  MlpNet discriminator;
  std::vector<GanHistoryEntry> history;
  std::size_t steps_run = 0;
};

/// Non-saturating GAN on samples of `target`. Throws DivergedTraining when a
/// loss or parameter becomes non-finite.
GanResult train_toy_gan(const GmmTarget& target, const GanTrainConfig& config,
                        SeededRng& rng);

// Binary layout, little-endian:
//   8 bytes  magic "GMINFNET"
//   u32      format version (1)
//   u32      activation (0 tanh, 1 relu)
//   u32      number of layer sizes L+1
//   u64 x (L+1) layer sizes
//   per affine layer: f64 weights row-major (out x in), then f64 biases
void save_net(const MlpNet& net, std::ostream& out);
MlpNet load_net(std::istream& in);
void save_net(const MlpNet& net, const std::string& path);
MlpNet load_net(const std::string& path);

}  // namespace gminf
