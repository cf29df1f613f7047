#include "spectral_core/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace spectral_core {

namespace {

double row_norm(const Matrix& m, std::size_t i) { return std::sqrt(sum_of_squares(m.row(i))); }

double interpolate(const PathSpectrum& s, double u) {
  const std::size_t n = s.sorted_values.size();
  if (n == 1) return s.sorted_values[0];
  const double pos = u * static_cast<double>(n - 1);
  const std::size_t lo = std::min(static_cast<std::size_t>(pos), n - 2);
  const double t = pos - static_cast<double>(lo);
  return s.sorted_values[lo] + t * (s.sorted_values[lo + 1] - s.sorted_values[lo]);
}

}  // namespace

RelevanceVector make_relevance(Vector scores) {
  RelevanceVector r;
  r.scores = std::move(scores);
  const double top = r.scores.empty() ? 0.0 : *std::max_element(r.scores.begin(), r.scores.end());
  r.normalized.resize(r.scores.size(), 0.0);
  if (top > 0.0) {
    for (std::size_t i = 0; i < r.scores.size(); ++i) r.normalized[i] = r.scores[i] / top;
  }
  return r;
}

RelevanceVector relevance_standard(const DenseLayer& layer) {
  Vector scores(layer.n_out());
  for (std::size_t i = 0; i < layer.n_out(); ++i) scores[i] = row_norm(layer.weights, i);
  return make_relevance(std::move(scores));
}

RelevanceVector relevance_spectral(const SpectralLayer& layer) {
  layer.validate();
  for (double l : layer.lambda_in) {
    if (l != 0.0) throw std::invalid_argument("relevance_spectral: lambda_in must be zero");
  }
  Vector scores(layer.n_out());
  for (std::size_t i = 0; i < layer.n_out(); ++i) scores[i] = std::abs(layer.lambda_out[i]) * row_norm(layer.phi, i);
  return make_relevance(std::move(scores));
}

RelevanceVector relevance(const Layer& layer) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) return relevance_standard(*d);
  return relevance_spectral(std::get<SpectralLayer>(layer));
}

Histogram histogram(std::span<const double> normalized, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram: bins must be positive");
  Histogram h;
  h.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.bin_edges[b] = static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : normalized) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    const auto bin = std::min(static_cast<std::size_t>(clamped * static_cast<double>(bins)), bins - 1);
    ++h.counts[bin];
  }
  return h;
}

Histogram histogram(const RelevanceVector& relevance, std::size_t bins) {
  return histogram(relevance.normalized, bins);
}

std::size_t estimate_core_size(const RelevanceVector& relevance, double tau) {
  return core_indices(relevance, tau).size();
}

std::vector<std::size_t> core_indices(const RelevanceVector& relevance, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("core size: tau must lie in (0, 1)");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < relevance.normalized.size(); ++i)
    if (relevance.normalized[i] >= tau) keep.push_back(i);
  return keep;
}

std::vector<std::size_t> removal_order(const RelevanceVector& relevance) {
  std::vector<std::size_t> order(relevance.scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return relevance.scores[a] < relevance.scores[b];
  });
  return order;
}

Network prune_to(const Network& net, std::span<const std::size_t> keep) {
  net.validate();
  if (net.layers.size() < 2) throw std::invalid_argument("prune_to: network needs two layers");
  if (keep.empty()) throw std::invalid_argument("prune_to: keep set is empty");
  const std::size_t h = layer_n_out(net.layers[0]);
  std::vector<std::size_t> kept(keep.begin(), keep.end());
  std::sort(kept.begin(), kept.end());
  if (std::adjacent_find(kept.begin(), kept.end()) != kept.end())
    throw std::invalid_argument("prune_to: duplicate node index");
  if (kept.back() >= h) throw std::invalid_argument("prune_to: node index out of range");

  Network out = net;
  const std::size_t m = kept.size();
  auto take_rows = [&](const Matrix& src) {
    Matrix dst(m, src.cols());
    for (std::size_t r = 0; r < m; ++r) std::copy_n(src.row(kept[r]).begin(), src.cols(), dst.row(r).begin());
    return dst;
  };
  auto take_cols = [&](const Matrix& src) {
    Matrix dst(src.rows(), m);
    for (std::size_t r = 0; r < src.rows(); ++r)
      for (std::size_t c = 0; c < m; ++c) dst(r, c) = src(r, kept[c]);
    return dst;
  };
  auto take = [&](const Vector& src) {
    Vector dst(m);
    for (std::size_t c = 0; c < m; ++c) dst[c] = src[kept[c]];
    return dst;
  };

  if (auto* d = std::get_if<DenseLayer>(&out.layers[0])) {
    d->weights = take_rows(d->weights);
  } else {
    auto& s = std::get<SpectralLayer>(out.layers[0]);
    s.phi = take_rows(s.phi);
    s.lambda_out = take(s.lambda_out);
  }
  if (auto* d = std::get_if<DenseLayer>(&out.layers[1])) {
    d->weights = take_cols(d->weights);
  } else {
    auto& s = std::get<SpectralLayer>(out.layers[1]);
    s.phi = take_cols(s.phi);
    s.lambda_in = take(s.lambda_in);
  }
  return out;
}

PruneCurve prune_curve(const Network& net, const RelevanceVector& relevance, const Dataset& test,
                       std::size_t n_teacher) {
  const std::size_t h = layer_n_out(net.layers.at(0));
  if (relevance.scores.size() != h) throw std::invalid_argument("prune_curve: relevance length must equal h");
  PruneCurve curve;
  curve.n_teacher = n_teacher;
  curve.full_mse = mse(net, test);
  const auto order = removal_order(relevance);
  std::vector<bool> alive(h, true);
  for (std::size_t step = 0; step + 1 < h; ++step) {
    alive[order[step]] = false;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < h; ++i)
      if (alive[i]) keep.push_back(i);
    const Network pruned = prune_to(net, keep);
    curve.points.push_back({keep.size(), mse(pruned, test) - curve.full_mse});
  }
  return curve;
}

PathTensor path_tensor(const Network& net) {
  if (net.layers.size() < 2) throw std::invalid_argument("path_tensor: need at least two linear transfers");
  const Matrix w1 = layer_weights(net.layers[0]);
  const Matrix w2 = layer_weights(net.layers[1]);
  PathTensor g;
  g.n0 = w1.cols();
  g.n1 = w1.rows();
  g.n2 = w2.rows();
  if (w2.cols() != g.n1) throw ShapeError("path_tensor: layer shapes do not chain");
  g.values.resize(g.n0 * g.n1 * g.n2);
  for (std::size_t i0 = 0; i0 < g.n0; ++i0)
    for (std::size_t i1 = 0; i1 < g.n1; ++i1)
      for (std::size_t i2 = 0; i2 < g.n2; ++i2)
        g.values[(i0 * g.n1 + i1) * g.n2 + i2] = w1(i1, i0) * w2(i2, i1);
  return g;
}

PathSpectrum path_spectrum(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("path_spectrum: empty tensor");
  PathSpectrum s;
  s.sorted_values.assign(values.begin(), values.end());
  std::sort(s.sorted_values.begin(), s.sorted_values.end());
  const std::size_t n = s.sorted_values.size();
  s.frac_index.resize(n, 0.0);
  for (std::size_t i = 0; i < n && n > 1; ++i)
    s.frac_index[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return s;
}

PathSpectrum path_spectrum(const PathTensor& gamma) { return path_spectrum(gamma.values); }

double spectrum_distance(const PathSpectrum& a, const PathSpectrum& b, std::size_t grid) {
  if (a.sorted_values.empty() || b.sorted_values.empty())
    throw std::invalid_argument("spectrum_distance: empty spectrum");
  if (grid < 2) throw std::invalid_argument("spectrum_distance: grid needs two points");
  double acc = 0.0;
  for (std::size_t k = 0; k < grid; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(grid - 1);
    const double d = interpolate(a, u) - interpolate(b, u);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(grid));
}

}  // namespace spectral_core
