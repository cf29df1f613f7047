#pragma once

#include <span>
#include <vector>

#include "spectral_core/training.hpp"

namespace spectral_core {

/// Per-node relevance of a hidden layer, raw and divided by the maximum.
struct RelevanceVector {
  Vector scores;
  Vector normalized;  // all zero when every score is zero
};

RelevanceVector make_relevance(Vector scores);

/// Norm of each node's incoming weight row.
RelevanceVector relevance_standard(const DenseLayer& layer);
/// |lambda_out_i| times the norm of eigenvector row i. Requires lambda_in == 0.
RelevanceVector relevance_spectral(const SpectralLayer& layer);
RelevanceVector relevance(const Layer& layer);

struct Histogram {
  Vector bin_edges;  // bins + 1 uniform edges on [0, 1]
  std::vector<std::size_t> counts;
};

inline constexpr std::size_t kHistogramBins = 50;
inline constexpr double kDefaultCoreTau = 0.02;

/// Bins values in [0, 1]; 1.0 lands in the top bin.
Histogram histogram(std::span<const double> normalized, std::size_t bins = kHistogramBins);
Histogram histogram(const RelevanceVector& relevance, std::size_t bins = kHistogramBins);

/// Number of nodes whose normalized score is at least tau.
std::size_t estimate_core_size(const RelevanceVector& relevance, double tau = kDefaultCoreTau);
/// Indices of those nodes, ascending.
std::vector<std::size_t> core_indices(const RelevanceVector& relevance, double tau = kDefaultCoreTau);

/// Node indices by ascending score; ties go to the lower index first.
std::vector<std::size_t> removal_order(const RelevanceVector& relevance);

/// Keeps only the listed first-hidden-layer nodes: drops the other rows of
/// layer 1 and the matching columns of layer 2.
Network prune_to(const Network& net, std::span<const std::size_t> keep);

struct PrunePoint {
  std::size_t n_lambda = 0;
  double delta_mse = 0.0;
};

struct PruneCurve {
  std::vector<PrunePoint> points;  // n_lambda = h-1, h-2, ..., 1
  std::size_t n_teacher = 0;
  double full_mse = 0.0;
};

/// Removes nodes one at a time in removal_order and records the test MSE
/// change relative to the unpruned network.
PruneCurve prune_curve(const Network& net, const RelevanceVector& relevance, const Dataset& test,
                       std::size_t n_teacher);

/// Two-hop path products through the first hidden layer:
/// gamma(i0, i1, i2) = w1[i1][i0] * w2[i2][i1] with effective weights.
struct PathTensor {
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  Vector values;  // index ((i0 * n1) + i1) * n2 + i2

  double operator()(std::size_t i0, std::size_t i1, std::size_t i2) const {
    return values[(i0 * n1 + i1) * n2 + i2];
  }
};

PathTensor path_tensor(const Network& net);

struct PathSpectrum {
  Vector sorted_values;
  Vector frac_index;  // i / (len - 1); a single entry sits at 0
};

PathSpectrum path_spectrum(const PathTensor& gamma);
PathSpectrum path_spectrum(std::span<const double> values);

inline constexpr std::size_t kSpectrumGrid = 1000;

/// RMS difference of the two sorted curves after linear resampling onto a
/// common uniform grid of fractions.
double spectrum_distance(const PathSpectrum& a, const PathSpectrum& b, std::size_t grid = kSpectrumGrid);

}  // namespace spectral_core
