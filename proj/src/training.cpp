#include "spectral_core/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace spectral_core {

namespace {

// Flush-to-zero and denormals-are-zero for the current thread, restored on
// exit. Pruned nodes decay towards the subnormal range, where x86 arithmetic
// slows down by an order of magnitude.
class FlushDenormalsScope {
 public:
#if defined(__SSE2__)
  FlushDenormalsScope() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormalsScope() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#else
  FlushDenormalsScope() = default;
#endif
  FlushDenormalsScope(const FlushDenormalsScope&) = delete;
  FlushDenormalsScope& operator=(const FlushDenormalsScope&) = delete;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

bool is_output_layer(const Network& net, std::size_t k) { return k + 1 == net.layers.size(); }

void activate(const Activation& act, const Matrix& z, Matrix& a, Matrix& da) {
  a = Matrix(z.rows(), z.cols());
  da = Matrix(z.rows(), z.cols());
  act.apply(z.entries(), a.entries(), da.entries());
}

Matrix activate(const Activation& act, Matrix z) {
  act.apply(z.entries(), z.entries());
  return z;
}

}  // namespace

std::size_t Network::input_dim() const {
  require(!layers.empty(), "Network: no layers");
  return layer_n_in(layers.front());
}

std::size_t Network::output_dim() const {
  require(!layers.empty(), "Network: no layers");
  return layer_n_out(layers.back());
}

void Network::validate() const {
  require(!layers.empty(), "Network: no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (const auto* s = std::get_if<SpectralLayer>(&layers[k])) s->validate();
    if (k > 0) {
      require(layer_n_in(layers[k]) == layer_n_out(layers[k - 1]),
              "Network: layer " + std::to_string(k) + " input does not match previous output");
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("train: adam betas must lie in (0, 1)");
  }
  if (reg.alpha_w < 0.0 || reg.alpha_lambda < 0.0 || reg.alpha_phi < 0.0) {
    throw std::invalid_argument("train: regularization coefficients must be nonnegative");
  }
}

std::vector<ParameterBlock> parameter_blocks(Network& net) {
  std::vector<ParameterBlock> blocks;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    const std::string prefix = "layer" + std::to_string(k + 1) + ".";
    if (auto* d = std::get_if<DenseLayer>(&net.layers[k])) {
      blocks.push_back({d->weights.entries(), true, prefix + "weights"});
    } else {
      auto& s = std::get<SpectralLayer>(net.layers[k]);
      blocks.push_back({s.phi.entries(), true, prefix + "phi"});
      blocks.push_back({s.lambda_in, s.lambda_in_trainable, prefix + "lambda_in"});
      blocks.push_back({s.lambda_out, s.lambda_out_trainable, prefix + "lambda_out"});
    }
  }
  return blocks;
}

std::vector<std::span<double>> gradient_blocks(NetworkGradients& grads) {
  std::vector<std::span<double>> blocks;
  for (auto& g : grads.layers) {
    if (!g.d_weights.entries().empty() || g.d_phi.entries().empty()) {
      blocks.emplace_back(g.d_weights.entries());
    } else {
      blocks.emplace_back(g.d_phi.entries());
      blocks.emplace_back(g.d_lambda_in);
      blocks.emplace_back(g.d_lambda_out);
    }
  }
  return blocks;
}

double forward(const Network& net, std::span<const double> x) {
  require(x.size() == net.input_dim(), "forward: input length mismatch");
  require(net.output_dim() == 1, "forward: scalar output expected");
  Matrix batch(1, x.size(), Vector(x.begin(), x.end()));
  return forward_batch(net, batch)(0, 0);
}

Matrix forward_batch(const Network& net, const Matrix& inputs) {
  net.validate();
  require(inputs.cols() == net.input_dim(), "forward: input width mismatch");
  Matrix a = inputs;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Matrix z = forward_batch(net.layers[k], a);
    a = is_output_layer(net, k) ? std::move(z) : activate(net.activation, std::move(z));
  }
  return a;
}

double mse(const Network& net, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("mse: empty dataset");
  require(data.inputs.rows() == data.size(), "mse: inputs and targets disagree in length");
  const Matrix out = forward_batch(net, data.inputs);
  require(out.cols() == 1, "mse: scalar output expected");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = data.targets[i] - out(i, 0);
    acc += r * r;
  }
  return acc / static_cast<double>(data.size());
}

double regularization_penalty(const Network& net, const RegularizationConfig& reg) {
  double penalty = 0.0;
  for (std::size_t k = 0; k + 1 < net.layers.size(); ++k) {
    if (const auto* d = std::get_if<DenseLayer>(&net.layers[k])) {
      penalty += reg.alpha_w * sum_of_squares(d->weights.entries());
    } else {
      const auto& s = std::get<SpectralLayer>(net.layers[k]);
      penalty += reg.alpha_phi * sum_of_squares(s.phi.entries());
      if (s.lambda_out_trainable) penalty += reg.alpha_lambda * sum_of_squares(s.lambda_out);
      if (s.lambda_in_trainable) penalty += reg.alpha_lambda * sum_of_squares(s.lambda_in);
    }
  }
  return penalty;
}

double regularized_loss(const Network& net, const Dataset& batch, const RegularizationConfig& reg) {
  return mse(net, batch) + regularization_penalty(net, reg);
}

double loss_standard(const Network& net, const Dataset& batch, const RegularizationConfig& reg) {
  for (std::size_t k = 0; k + 1 < net.layers.size(); ++k) {
    require(std::holds_alternative<DenseLayer>(net.layers[k]),
            "loss_standard: hidden layers must be dense");
  }
  return regularized_loss(net, batch, reg);
}

double loss_spectral(const Network& net, const Dataset& batch, const RegularizationConfig& reg) {
  require(net.layers.size() >= 3, "loss_spectral: expected at least two hidden layers");
  require(std::holds_alternative<SpectralLayer>(net.layers[0]),
          "loss_spectral: first layer must be spectral");
  require(std::holds_alternative<DenseLayer>(net.layers[1]),
          "loss_spectral: second layer must be dense");
  return regularized_loss(net, batch, reg);
}

NetworkGradients loss_gradient(const Network& net, const Dataset& batch,
                               const RegularizationConfig& reg, double* loss_out) {
  net.validate();
  require(batch.size() > 0, "loss_gradient: empty batch");
  require(batch.inputs.cols() == net.input_dim(), "loss_gradient: input width mismatch");
  require(net.output_dim() == 1, "loss_gradient: scalar output expected");
  const std::size_t depth = net.layers.size();
  const std::size_t n = batch.size();

  std::vector<Matrix> weights(depth);
  std::vector<Matrix> inputs(depth);   // input to layer k
  std::vector<Matrix> slopes(depth);   // activation derivative after layer k
  Matrix a = batch.inputs;
  for (std::size_t k = 0; k < depth; ++k) {
    weights[k] = layer_weights(net.layers[k]);
    Matrix z = forward_batch(weights[k], a);
    inputs[k] = std::move(a);
    if (is_output_layer(net, k)) {
      a = std::move(z);
    } else {
      activate(net.activation, z, a, slopes[k]);
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix upstream(n, 1);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = a(i, 0) - batch.targets[i];
    sq += r * r;
    upstream(i, 0) = 2.0 * r * inv_n;
  }
  if (loss_out) *loss_out = sq * inv_n + regularization_penalty(net, reg);

  NetworkGradients grads;
  grads.layers.resize(depth);
  for (std::size_t k = depth; k-- > 0;) {
    const bool want_input = k > 0;
    const bool penalized = !is_output_layer(net, k);
    if (const auto* d = std::get_if<DenseLayer>(&net.layers[k])) {
      LayerGradients g;
      g.d_weights = matmul_at(upstream, inputs[k]);
      if (want_input) g.d_input = matmul(upstream, weights[k]);
      if (penalized) {
        auto& dw = g.d_weights.entries();
        const auto& w = d->weights.entries();
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += 2.0 * reg.alpha_w * w[i];
      }
      grads.layers[k] = std::move(g);
    } else {
      const auto& s = std::get<SpectralLayer>(net.layers[k]);
      LayerGradients g = spectral_backward(s, inputs[k], upstream, false);
      if (want_input) g.d_input = matmul(upstream, weights[k]);
      if (penalized) {
        auto& dphi = g.d_phi.entries();
        const auto& phi = s.phi.entries();
        for (std::size_t i = 0; i < dphi.size(); ++i) dphi[i] += 2.0 * reg.alpha_phi * phi[i];
        if (s.lambda_out_trainable) {
          for (std::size_t i = 0; i < s.lambda_out.size(); ++i)
            g.d_lambda_out[i] += 2.0 * reg.alpha_lambda * s.lambda_out[i];
        }
        if (s.lambda_in_trainable) {
          for (std::size_t j = 0; j < s.lambda_in.size(); ++j)
            g.d_lambda_in[j] += 2.0 * reg.alpha_lambda * s.lambda_in[j];
        }
      }
      grads.layers[k] = std::move(g);
    }
    if (want_input) {
      Matrix& d_in = grads.layers[k].d_input;
      auto& e = d_in.entries();
      const auto& slope = slopes[k - 1].entries();
      for (std::size_t i = 0; i < e.size(); ++i) e[i] *= slope[i];
      upstream = std::move(d_in);
      d_in = Matrix();
    }
  }
  return grads;
}

AdamState make_adam_state(Network& net) {
  AdamState state;
  for (const auto& block : parameter_blocks(net)) {
    state.first_moment.emplace_back(block.values.size(), 0.0);
    state.second_moment.emplace_back(block.values.size(), 0.0);
  }
  return state;
}

void adam_step(Network& net, NetworkGradients& grads, AdamState& state, const TrainConfig& cfg) {
  auto params = parameter_blocks(net);
  auto gblocks = gradient_blocks(grads);
  require(params.size() == gblocks.size(), "adam_step: gradient blocks do not match parameters");
  require(state.first_moment.size() == params.size(), "adam_step: state does not match parameters");
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& block = params[b];
    if (!block.trainable) continue;
    const auto g = gblocks[b];
    require(g.size() == block.values.size(), "adam_step: gradient shape mismatch in " + block.name);
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      block.values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
  }
}

TrainResult train(Network net, const Dataset& data, const Dataset* test, const TrainConfig& cfg) {
  cfg.validate();
  net.validate();
  require(data.size() > 0, "train: empty dataset");
  require(data.inputs.cols() == net.input_dim(), "train: input width mismatch");
  require(cfg.batch_size <= data.size(), "train: batch_size exceeds dataset size");

  const FlushDenormalsScope flush_denormals;
  TrainResult result;
  AdamState state = make_adam_state(net);
  SeededRng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t dim = data.inputs.cols();

  Dataset batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double weighted_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      batch.inputs = Matrix(count, dim);
      batch.targets.resize(count);
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t src = order[start + r];
        std::copy_n(data.inputs.row(src).begin(), dim, batch.inputs.row(r).begin());
        batch.targets[r] = data.targets[src];
      }
      double loss = 0.0;
      NetworkGradients grads = loss_gradient(net, batch, cfg.reg, &loss);
      if (!std::isfinite(loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             " (diverged; try a smaller learning rate)");
      }
      weighted_loss += loss * static_cast<double>(count);
      adam_step(net, grads, state, cfg);
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = weighted_loss / static_cast<double>(data.size());
    record.test_mse = std::numeric_limits<double>::quiet_NaN();
    const bool evaluate = test != nullptr && ((cfg.eval_every > 0 && epoch % cfg.eval_every == 0) ||
                                              epoch == cfg.epochs);
    if (evaluate) record.test_mse = mse(net, *test);
    result.history.epochs.push_back(record);
  }
  result.network = std::move(net);
  return result;
}

namespace {

long double activate_extended(ActivationKind kind, long double z) {
  switch (kind) {
    case ActivationKind::tanh: return std::tanh(z);
    case ActivationKind::erf_scaled: return std::erf(z / std::sqrt(2.0L));
    case ActivationKind::relu: return z > 0.0L ? z : 0.0L;
    case ActivationKind::identity: return z;
  }
  return z;
}

// Same loss as regularized_loss, evaluated in extended precision so the
// finite differences are not swamped by rounding in the forward pass.
long double regularized_loss_extended(const Network& net, const Dataset& batch, const RegularizationConfig& reg) {
  const std::size_t depth = net.layers.size();
  std::vector<std::vector<long double>> weights(depth);
  for (std::size_t k = 0; k < depth; ++k) {
    if (const auto* d = std::get_if<DenseLayer>(&net.layers[k])) {
      weights[k].assign(d->weights.entries().begin(), d->weights.entries().end());
    } else {
      const auto& sl = std::get<SpectralLayer>(net.layers[k]);
      const std::size_t rows = sl.phi.rows(), cols = sl.phi.cols();
      weights[k].resize(rows * cols);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          weights[k][i * cols + j] = (static_cast<long double>(sl.lambda_in[j]) - sl.lambda_out[i]) * sl.phi(i, j);
    }
  }
  long double sq = 0.0L;
  std::vector<long double> x, z;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto row = batch.inputs.row(n);
    x.assign(row.begin(), row.end());
    for (std::size_t k = 0; k < depth; ++k) {
      const std::size_t rows = layer_n_out(net.layers[k]), cols = layer_n_in(net.layers[k]);
      z.assign(rows, 0.0L);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) z[i] += weights[k][i * cols + j] * x[j];
      if (k + 1 < depth)
        for (auto& v : z) v = activate_extended(net.activation.kind, v);
      x.swap(z);
    }
    const long double r = batch.targets[n] - x[0];
    sq += r * r;
  }
  long double penalty = 0.0L;
  const auto squares = [](std::span<const double> v) {
    long double acc = 0.0L;
    for (double e : v) acc += static_cast<long double>(e) * e;
    return acc;
  };
  for (std::size_t k = 0; k + 1 < depth; ++k) {
    if (const auto* d = std::get_if<DenseLayer>(&net.layers[k])) {
      penalty += reg.alpha_w * squares(d->weights.entries());
    } else {
      const auto& sl = std::get<SpectralLayer>(net.layers[k]);
      penalty += reg.alpha_phi * squares(sl.phi.entries());
      if (sl.lambda_out_trainable) penalty += reg.alpha_lambda * squares(sl.lambda_out);
      if (sl.lambda_in_trainable) penalty += reg.alpha_lambda * squares(sl.lambda_in);
    }
  }
  return sq / static_cast<long double>(batch.size()) + penalty;
}

}  // namespace

GradCheckReport grad_check(const Network& net, const Dataset& batch, const RegularizationConfig& reg,
                           double step, double corrupt_scale) {
  GradCheckReport report;
  Network probe = net;
  NetworkGradients grads = loss_gradient(probe, batch, reg);
  auto gblocks = gradient_blocks(grads);
  auto params = parameter_blocks(probe);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& block = params[b];
    const auto g = gblocks[b];
    if (!block.trainable) {
      for (double v : g)
        if (v != 0.0) report.untrainable_gradients_zero = false;
      continue;
    }
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      const double plus = saved + step;
      const double minus = saved - step;
      block.values[i] = plus;
      const long double up = regularized_loss_extended(probe, batch, reg);
      block.values[i] = minus;
      const long double down = regularized_loss_extended(probe, batch, reg);
      block.values[i] = saved;
      const double numeric = static_cast<double>((up - down) / (plus - minus));
      const double analytic = g[i] * corrupt_scale;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = rel;
        report.worst_block = block.name;
      }
    }
  }
  return report;
}

}  // namespace spectral_core
