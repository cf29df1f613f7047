#pragma once

#include <span>
#include <vector>

#include "spectral_core/layers.hpp"

namespace spectral_core {

// Single-channel, single-filter convolution. Images are vectorized row-major
// and the filter is applied as a cross-correlation (no flip).
struct ConvSpec {
  std::size_t input_height = 4;
  std::size_t input_width = 4;
  Matrix filter = Matrix(2, 2, 1.0);
  std::size_t stride_x = 1;
  std::size_t stride_y = 1;
  std::size_t pad_x = 0;
  std::size_t pad_y = 0;

  std::size_t output_height() const;
  std::size_t output_width() const;
  std::size_t input_size() const { return input_height * input_width; }
  std::size_t output_size() const { return output_height() * output_width(); }
  /// Throws ShapeError when the filter does not fit the padded input.
  void validate() const;
};

/// Sliding-window reference implementation with zero padding.
Matrix direct_conv2d(const Matrix& x, const ConvSpec& spec);

struct ToeplitzOperator {
  Matrix matrix;  // output_size x input_size
  ConvSpec spec;
};

ToeplitzOperator toeplitz_matrix(const ConvSpec& spec);

/// The Toeplitz operator rewritten over a duplicated input so that every
/// column carries exactly one filter weight.
struct DuplicatedForm {
  std::vector<std::size_t> duplication_map;  // expanded column -> source pixel
  Matrix binary_phi;                         // output_size x columns, one 1 per column
  Vector lambda_in;                          // filter weight of each column

  Vector duplicate(std::span<const double> x) const;
  /// binary_phi * (lambda_in . duplicate(x)).
  Vector apply(std::span<const double> x) const;
};

DuplicatedForm duplicated_form(const ConvSpec& spec);

/// Spectral layer over the duplicated input: phi = binary_phi,
/// lambda_out = 0 and lambda_in holds the filter weights.
SpectralLayer conv_as_lambda_in(const ConvSpec& spec);

/// Spectral layer over the original input with lambda_in = 1, phi equal to
/// the Toeplitz operator and uniform lambda_out = 1 - relevance, so the
/// layer computes relevance times the convolution. relevance = 0 gives
/// the zero operator.
SpectralLayer conv_filter_relevance(const ConvSpec& spec, double relevance);

}  // namespace spectral_core
