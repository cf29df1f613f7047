#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spectral_core/convspec.hpp"
#include "spectral_core/experiment.hpp"

namespace spectral_core {

// Randomized verification suites shared by the CLI and the test binaries.

SpectralLayer random_spectral_layer(SeededRng& rng, std::size_t n_in, std::size_t n_out);

struct IdentityCheck {
  std::size_t layers = 0;
  double max_inverse_error = 0.0;   // |Phi (2I - Phi) - I|
  double max_block_error = 0.0;     // lower-left block of Phi Lambda Phi^-1 vs effective weights
  double max_diagonal_error = 0.0;  // diagonal of the composition vs (lambda_in, lambda_out)
  double max_upper_error = 0.0;     // entries that must vanish
};

IdentityCheck check_algebraic_identities(std::size_t count, std::size_t max_dim, std::uint64_t seed);

enum class CheckLayerKind { dense, spectral, spectral_lambda_in };

std::string_view to_string(CheckLayerKind kind);

/// Small network whose first layer has the given kind; later layers dense.
Network make_check_network(CheckLayerKind kind, ActivationKind activation, std::span<const std::size_t> dims,
                           SeededRng& rng);
/// Gaussian batch; for relu, samples with a hidden pre-activation within
/// margin of the kink are redrawn so finite differences stay on one side.
Dataset make_check_batch(const Network& net, std::size_t n, SeededRng& rng, double margin = 1e-3);

struct GradSuiteEntry {
  CheckLayerKind kind = CheckLayerKind::dense;
  ActivationKind activation = ActivationKind::tanh;
  double max_relative_error = 0.0;
  std::string worst_block;
  bool untrainable_gradients_zero = true;
  std::size_t seeds = 0;
};

struct GradSuiteConfig {
  std::vector<std::size_t> dims = {10, 8, 5, 1};
  std::vector<ActivationKind> activations = {ActivationKind::tanh, ActivationKind::erf_scaled,
                                             ActivationKind::relu, ActivationKind::identity};
  std::vector<CheckLayerKind> kinds = {CheckLayerKind::dense, CheckLayerKind::spectral,
                                       CheckLayerKind::spectral_lambda_in};
  std::size_t seeds = 20;
  std::uint64_t base_seed = 1;
  std::size_t batch = 16;
  double step = 1e-5;
  RegularizationConfig reg{0.01, 0.02, 0.03};
  double corrupt_scale = 1.0;
};

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteConfig& cfg);

/// Random single-channel case: input up to 8x8, filter up to 3x3,
/// stride in {1, 2}, padding in {0, 1}.
ConvSpec random_conv_spec(SeededRng& rng);

struct ConvCheck {
  std::size_t cases = 0;
  double max_toeplitz_error = 0.0;
  double max_duplicated_error = 0.0;
  double max_lambda_in_error = 0.0;
  double max_relevance_error = 0.0;       // relevance = 1 against the oracle
  double max_half_relevance_error = 0.0;  // relevance = 0.5 against half the oracle
  bool single_nonzero_columns = true;
  bool toeplitz_entries_from_filter = true;

  double max_error() const;
};

ConvCheck check_conv_case(const ConvSpec& spec, SeededRng& rng, std::size_t inputs_per_case = 4);
ConvCheck check_conv_equivalence(std::size_t cases, std::uint64_t seed);

}  // namespace spectral_core
