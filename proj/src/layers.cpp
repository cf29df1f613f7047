#include "spectral_core/layers.hpp"

#include "spectral_core/fast_math.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace spectral_core {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::erf_scaled: return "erf";
    case ActivationKind::relu: return "relu";
    case ActivationKind::identity: return "identity";
  }
  return "unknown";
}

ActivationKind parse_activation(std::string_view name) {
  if (name == "tanh") return ActivationKind::tanh;
  if (name == "erf" || name == "erf-scaled" || name == "erf_scaled") return ActivationKind::erf_scaled;
  if (name == "relu") return ActivationKind::relu;
  if (name == "identity" || name == "linear") return ActivationKind::identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

double Activation::apply(double z) const {
  switch (kind) {
    case ActivationKind::tanh: return fast_tanh(z);
    case ActivationKind::erf_scaled: return std::erf(z * std::numbers::sqrt2 / 2.0);
    case ActivationKind::relu: return z > 0.0 ? z : 0.0;
    case ActivationKind::identity: return z;
  }
  return z;
}

double Activation::derivative(double z) const {
  switch (kind) {
    case ActivationKind::tanh: {
      const double t = fast_tanh(z);
      return 1.0 - t * t;
    }
    case ActivationKind::erf_scaled:
      // d/dz erf(z/sqrt2) = sqrt(2/pi) exp(-z^2/2)
      return std::numbers::sqrt2 * std::numbers::inv_sqrtpi * std::exp(-0.5 * z * z);
    case ActivationKind::relu: return z > 0.0 ? 1.0 : 0.0;
    case ActivationKind::identity: return 1.0;
  }
  return 1.0;
}

void Activation::apply(std::span<const double> z, std::span<double> out, std::span<double> slope) const {
  require(z.size() == out.size() && z.size() == slope.size(), "Activation::apply: length mismatch");
  const double* __restrict in = z.data();
  double* __restrict a = out.data();
  double* __restrict d = slope.data();
  const std::size_t n = z.size();
  if (kind == ActivationKind::tanh) {
    for (std::size_t i = 0; i < n; ++i) {
      const double t = fast_tanh(in[i]);
      a[i] = t;
      d[i] = 1.0 - t * t;
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = apply(in[i]);
    d[i] = derivative(in[i]);
  }
}

void Activation::apply(std::span<const double> z, std::span<double> out) const {
  require(z.size() == out.size(), "Activation::apply: length mismatch");
  // May run in place.
  const double* in = z.data();
  double* a = out.data();
  const std::size_t n = z.size();
  if (kind == ActivationKind::tanh) {
    for (std::size_t i = 0; i < n; ++i) a[i] = fast_tanh(in[i]);
    return;
  }
  for (std::size_t i = 0; i < n; ++i) a[i] = apply(in[i]);
}

void SpectralLayer::validate() const {
  require(lambda_in.size() == phi.cols(), "SpectralLayer: lambda_in length must equal n_in");
  require(lambda_out.size() == phi.rows(), "SpectralLayer: lambda_out length must equal n_out");
}

std::size_t layer_n_in(const Layer& layer) {
  return std::visit([](const auto& l) { return l.n_in(); }, layer);
}

std::size_t layer_n_out(const Layer& layer) {
  return std::visit([](const auto& l) { return l.n_out(); }, layer);
}

Matrix layer_weights(const Layer& layer) {
  if (const auto* dense = std::get_if<DenseLayer>(&layer)) return dense->weights;
  return effective_weights(std::get<SpectralLayer>(layer));
}

Matrix effective_weights(const SpectralLayer& layer) {
  layer.validate();
  Matrix w(layer.n_out(), layer.n_in());
  for (std::size_t i = 0; i < layer.n_out(); ++i)
    for (std::size_t j = 0; j < layer.n_in(); ++j)
      w(i, j) = (layer.lambda_in[j] - layer.lambda_out[i]) * layer.phi(i, j);
  return w;
}

Vector dense_forward(const DenseLayer& layer, std::span<const double> x) {
  return matvec(layer.weights, x);
}

Vector spectral_forward(const SpectralLayer& layer, std::span<const double> x) {
  layer.validate();
  require(x.size() == layer.n_in(), "spectral_forward: input length mismatch");
  const Vector scaled_input = hadamard(layer.lambda_in, x);
  Vector z = matvec(layer.phi, scaled_input);
  const Vector projected = matvec(layer.phi, x);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] -= layer.lambda_out[i] * projected[i];
  return z;
}

Matrix build_full_phi(const SpectralLayer& layer) {
  layer.validate();
  const std::size_t n_in = layer.n_in();
  Matrix full = Matrix::identity(n_in + layer.n_out());
  for (std::size_t i = 0; i < layer.n_out(); ++i)
    for (std::size_t j = 0; j < n_in; ++j) full(n_in + i, j) = layer.phi(i, j);
  return full;
}

Matrix build_full_lambda(const SpectralLayer& layer) {
  layer.validate();
  const std::size_t n_in = layer.n_in();
  Matrix full(n_in + layer.n_out(), n_in + layer.n_out());
  for (std::size_t j = 0; j < n_in; ++j) full(j, j) = layer.lambda_in[j];
  for (std::size_t i = 0; i < layer.n_out(); ++i) full(n_in + i, n_in + i) = layer.lambda_out[i];
  return full;
}

Matrix phi_inverse(const Matrix& full_phi, std::size_t n_in) {
  const std::size_t n = full_phi.rows();
  require(full_phi.cols() == n, "phi_inverse: matrix must be square");
  require(n_in <= n, "phi_inverse: block split exceeds matrix size");
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double v = full_phi(r, c);
      if (r == c) {
        require(v == 1.0, "phi_inverse: diagonal entries must be one");
      } else if (!(r >= n_in && c < n_in)) {
        require(v == 0.0, "phi_inverse: nonzero entry outside the lower-left block");
      }
    }
  }
  Matrix inv = scale(full_phi, -1.0);
  for (std::size_t i = 0; i < n; ++i) inv(i, i) = 1.0;
  return inv;
}

Matrix phi_inverse(const Matrix& full_phi) {
  const std::size_t n = full_phi.rows();
  require(full_phi.cols() == n, "phi_inverse: matrix must be square");
  // Any split with max nonzero column < split <= min nonzero row works.
  std::size_t min_row = n;
  std::size_t max_col_plus_one = 0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (r == c || full_phi(r, c) == 0.0) continue;
      require(r > c, "phi_inverse: nonzero entry above the diagonal");
      min_row = std::min(min_row, r);
      max_col_plus_one = std::max(max_col_plus_one, c + 1);
    }
  }
  require(max_col_plus_one <= min_row, "phi_inverse: nonzeros do not form a lower-left block");
  return phi_inverse(full_phi, max_col_plus_one);
}

Matrix spectral_compose(const SpectralLayer& layer) {
  const Matrix full_phi = build_full_phi(layer);
  return matmul(matmul(full_phi, build_full_lambda(layer)), phi_inverse(full_phi, layer.n_in()));
}

EmbeddedTransfer embed_and_transfer_full(const SpectralLayer& layer, std::span<const double> x) {
  require(x.size() == layer.n_in(), "embed_and_transfer: input length mismatch");
  const std::size_t n_in = layer.n_in();
  Vector v(n_in + layer.n_out(), 0.0);
  std::copy(x.begin(), x.end(), v.begin());
  const Vector image = matvec(spectral_compose(layer), v);
  EmbeddedTransfer out;
  out.source_part.assign(image.begin(), image.begin() + static_cast<std::ptrdiff_t>(n_in));
  out.destination_part.assign(image.begin() + static_cast<std::ptrdiff_t>(n_in), image.end());
  return out;
}

Vector embed_and_transfer(const SpectralLayer& layer, std::span<const double> x) {
  // The source block of A v carries lambda_in . x; the feedforward transfer
  // keeps only the destination block, whose diagonal part multiplies zeros.
  return embed_and_transfer_full(layer, x).destination_part;
}

Matrix forward_batch(const Matrix& weights, const Matrix& x_batch) {
  require(x_batch.cols() == weights.cols(), "forward_batch: input width mismatch");
  return matmul_bt(x_batch, weights);
}

Matrix forward_batch(const Layer& layer, const Matrix& x_batch) {
  return forward_batch(layer_weights(layer), x_batch);
}

LayerGradients dense_backward(const DenseLayer& layer, const Matrix& x_batch,
                              const Matrix& upstream_batch, bool want_input_grad) {
  require(x_batch.cols() == layer.n_in(), "dense_backward: input width mismatch");
  require(upstream_batch.cols() == layer.n_out(), "dense_backward: upstream width mismatch");
  require(x_batch.rows() == upstream_batch.rows(), "dense_backward: batch size mismatch");
  LayerGradients g;
  g.d_weights = matmul_at(upstream_batch, x_batch);
  if (want_input_grad) g.d_input = matmul(upstream_batch, layer.weights);
  return g;
}

LayerGradients spectral_backward(const SpectralLayer& layer, const Matrix& x_batch,
                                 const Matrix& upstream_batch, bool want_input_grad) {
  layer.validate();
  require(x_batch.cols() == layer.n_in(), "spectral_backward: input width mismatch");
  require(upstream_batch.cols() == layer.n_out(), "spectral_backward: upstream width mismatch");
  require(x_batch.rows() == upstream_batch.rows(), "spectral_backward: batch size mismatch");
  const std::size_t n_in = layer.n_in();
  const std::size_t n_out = layer.n_out();

  // Gradient with respect to the effective weights, then the chain rule
  // through w_ij = (lambda_in_j - lambda_out_i) phi_ij.
  const Matrix d_eff = matmul_at(upstream_batch, x_batch);
  LayerGradients g;
  g.d_phi = Matrix(n_out, n_in);
  g.d_lambda_in.assign(n_in, 0.0);
  g.d_lambda_out.assign(n_out, 0.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    double acc_out = 0.0;
    for (std::size_t j = 0; j < n_in; ++j) {
      const double d = d_eff(i, j);
      g.d_phi(i, j) = d * (layer.lambda_in[j] - layer.lambda_out[i]);
      acc_out += d * layer.phi(i, j);
      if (layer.lambda_in_trainable) g.d_lambda_in[j] += d * layer.phi(i, j);
    }
    if (layer.lambda_out_trainable) g.d_lambda_out[i] = -acc_out;
  }
  if (want_input_grad) g.d_input = matmul(upstream_batch, effective_weights(layer));
  return g;
}

}  // namespace spectral_core
