#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectral_core/layers.hpp"

namespace spectral_core {

/// Training diverged (non-finite loss) or a numerical check failed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Matrix inputs;  // n x input_dim
  Vector targets;

  std::size_t size() const { return targets.size(); }
};

/// Layer stack with one shared activation applied after every layer but the
/// last; the output layer is linear.
struct Network {
  std::vector<Layer> layers;
  Activation activation;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  /// Throws ShapeError unless consecutive layer shapes chain.
  void validate() const;
};

struct RegularizationConfig {
  double alpha_w = 3e-5;
  double alpha_lambda = 3e-4;
  double alpha_phi = 5e-5;
};

struct TrainConfig {
  std::size_t epochs = 2000;
  std::size_t batch_size = 300;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  RegularizationConfig reg;
  /// Evaluate test MSE every this many epochs; 0 evaluates only after the
  /// final epoch.
  std::size_t eval_every = 0;

  void validate() const;
};

/// Adam moments, one buffer per parameter block in parameter_blocks order.
struct AdamState {
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
  std::uint64_t step_count = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_mse = 0.0;  // NaN when not evaluated this epoch
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct ParameterBlock {
  std::span<double> values;
  bool trainable = true;
  std::string name;
};

/// Gradients of every layer, aligned with Network::layers.
struct NetworkGradients {
  std::vector<LayerGradients> layers;
};

// Parameter blocks in fixed order: dense -> weights; spectral -> phi,
// lambda_in, lambda_out.
std::vector<ParameterBlock> parameter_blocks(Network& net);
std::vector<std::span<double>> gradient_blocks(NetworkGradients& grads);

double forward(const Network& net, std::span<const double> x);
/// One output row per input row.
Matrix forward_batch(const Network& net, const Matrix& inputs);

double mse(const Network& net, const Dataset& data);

/// Sum-of-squares penalties over every layer except the output layer:
/// dense -> alpha_w |w|^2; spectral -> alpha_phi |phi|^2 + alpha_lambda |lambda|^2
/// over the trainable eigenvalue vectors.
double regularization_penalty(const Network& net, const RegularizationConfig& reg);
double regularized_loss(const Network& net, const Dataset& batch, const RegularizationConfig& reg);
/// Conventional student: every hidden layer must be dense.
double loss_standard(const Network& net, const Dataset& batch, const RegularizationConfig& reg);
/// Spectral student: first layer spectral, second dense.
double loss_spectral(const Network& net, const Dataset& batch, const RegularizationConfig& reg);

/// Analytic gradient of regularized_loss; writes the loss value when asked.
NetworkGradients loss_gradient(const Network& net, const Dataset& batch,
                               const RegularizationConfig& reg, double* loss_out = nullptr);

AdamState make_adam_state(Network& net);
void adam_step(Network& net, NetworkGradients& grads, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
  Network network;
  TrainHistory history;
};

/// Minibatch Adam with per-epoch reshuffling from cfg.seed. The last partial
/// batch is kept. Throws NumericalError on a non-finite loss.
TrainResult train(Network net, const Dataset& data, const Dataset* test, const TrainConfig& cfg);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_block;
  bool untrainable_gradients_zero = true;
  std::size_t checked = 0;
};

/// Compares every analytic gradient entry with a central difference of the
/// full regularized loss. relative error = |a - n| / max(|a|, |n|, floor).
/// corrupt_scale multiplies the analytic gradient (negative
/// control hook).
GradCheckReport grad_check(const Network& net, const Dataset& batch, const RegularizationConfig& reg,
                           double step = 1e-5, double corrupt_scale = 1.0);

inline constexpr double kGradCheckFloor = 1e-4;

}  // namespace spectral_core
