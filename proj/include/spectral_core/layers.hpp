#pragma once

#include <span>
#include <string_view>
#include <variant>

#include "spectral_core/numerics.hpp"

namespace spectral_core {

enum class ActivationKind { tanh, erf_scaled, relu, identity };

std::string_view to_string(ActivationKind kind);
/// Accepts "tanh", "erf", "erf-scaled", "relu", "identity"/"linear".
ActivationKind parse_activation(std::string_view name);

/// Elementwise nonlinearity. erf_scaled is erf(z / sqrt(2)); relu'(0) is 0.
struct Activation {
  ActivationKind kind = ActivationKind::tanh;

  double apply(double z) const;
  double derivative(double z) const;
  /// Batch form: out[i] = apply(z[i]) and slope[i] = derivative(z[i]).
  void apply(std::span<const double> z, std::span<double> out, std::span<double> slope) const;
  void apply(std::span<const double> z, std::span<double> out) const;
};

/// Conventional fully connected transfer, no bias.
struct DenseLayer {
  Matrix weights;  // n_out x n_in

  std::size_t n_in() const { return weights.cols(); }
  std::size_t n_out() const { return weights.rows(); }
};

/// Transfer parametrized by eigenvector block phi and node eigenvalues:
/// w_ij = (lambda_in[j] - lambda_out[i]) * phi[i][j].
struct SpectralLayer {
  Matrix phi;  // n_out x n_in
  Vector lambda_in;
  Vector lambda_out;
  bool lambda_in_trainable = false;
  bool lambda_out_trainable = true;

  std::size_t n_in() const { return phi.cols(); }
  std::size_t n_out() const { return phi.rows(); }

  /// Throws ShapeError when the eigenvalue vectors do not match phi.
  void validate() const;
};

using Layer = std::variant<DenseLayer, SpectralLayer>;

std::size_t layer_n_in(const Layer& layer);
std::size_t layer_n_out(const Layer& layer);
/// The weight matrix the layer actually applies.
Matrix layer_weights(const Layer& layer);

struct LayerGradients {
  Matrix d_weights;  // dense only
  Matrix d_phi;      // spectral only
  Vector d_lambda_in;
  Vector d_lambda_out;
  Matrix d_input;  // batch x n_in, empty when not requested
};

Matrix effective_weights(const SpectralLayer& layer);

Vector dense_forward(const DenseLayer& layer, std::span<const double> x);
/// Evaluates phi (lambda_in . x) - lambda_out . (phi x) without forming the
/// effective weights.
Vector spectral_forward(const SpectralLayer& layer, std::span<const double> x);

// Adjacency-matrix view of a layer. The node ordering is the n_in source
// nodes followed by the n_out destination nodes.
Matrix build_full_phi(const SpectralLayer& layer);
Matrix build_full_lambda(const SpectralLayer& layer);
/// Analytic inverse 2I - phi. Rejects matrices without the eigenvector
/// block structure (unit diagonal, nonzeros only in the lower-left block).
/// The first overload infers the block split from the nonzero pattern.
Matrix phi_inverse(const Matrix& full_phi);
Matrix phi_inverse(const Matrix& full_phi, std::size_t n_in);
/// full_phi * full_lambda * phi_inverse(full_phi).
Matrix spectral_compose(const SpectralLayer& layer);

struct EmbeddedTransfer {
  Vector source_part;       // first n_in components of A v, equal to lambda_in . x
  Vector destination_part;  // last n_out components, the layer pre-activation
};

/// Embeds x as v = (x, 0) and applies the composed adjacency matrix.
EmbeddedTransfer embed_and_transfer_full(const SpectralLayer& layer, std::span<const double> x);
/// Destination components only; these match spectral_forward.
Vector embed_and_transfer(const SpectralLayer& layer, std::span<const double> x);

/// Batched pre-activations: rows of x_batch in, rows of the result out.
Matrix forward_batch(const Layer& layer, const Matrix& x_batch);
Matrix forward_batch(const Matrix& weights, const Matrix& x_batch);

// Gradients summed over the batch rows. upstream_batch holds dLoss/dz for
// every sample. Untrainable eigenvalues get zero gradients.
LayerGradients dense_backward(const DenseLayer& layer, const Matrix& x_batch,
                              const Matrix& upstream_batch, bool want_input_grad = true);
LayerGradients spectral_backward(const SpectralLayer& layer, const Matrix& x_batch,
                                 const Matrix& upstream_batch, bool want_input_grad = true);

}  // namespace spectral_core
