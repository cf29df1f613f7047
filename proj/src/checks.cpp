#include "spectral_core/checks.hpp"

#include <algorithm>
#include <cmath>

namespace spectral_core {

SpectralLayer random_spectral_layer(SeededRng& rng, std::size_t n_in, std::size_t n_out) {
  SpectralLayer layer;
  layer.phi = Matrix(n_out, n_in);
  for (auto& v : layer.phi.entries()) v = rng.uniform(-1.0, 1.0);
  layer.lambda_in.resize(n_in);
  layer.lambda_out.resize(n_out);
  for (auto& v : layer.lambda_in) v = rng.uniform(-2.0, 2.0);
  for (auto& v : layer.lambda_out) v = rng.uniform(-2.0, 2.0);
  return layer;
}

IdentityCheck check_algebraic_identities(std::size_t count, std::size_t max_dim, std::uint64_t seed) {
  SeededRng rng(seed);
  IdentityCheck check;
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t n_in = 1 + rng.below(max_dim);
    const std::size_t n_out = 1 + rng.below(max_dim);
    const SpectralLayer layer = random_spectral_layer(rng, n_in, n_out);
    const Matrix full_phi = build_full_phi(layer);
    const Matrix inverse = phi_inverse(full_phi);
    const std::size_t n = n_in + n_out;
    check.max_inverse_error =
        std::max(check.max_inverse_error, max_abs_diff(matmul(full_phi, inverse), Matrix::identity(n)));

    const Matrix composed = spectral_compose(layer);
    const Matrix w = effective_weights(layer);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double v = composed(r, c);
        if (r == c) {
          const double expected = r < n_in ? layer.lambda_in[r] : layer.lambda_out[r - n_in];
          check.max_diagonal_error = std::max(check.max_diagonal_error, std::abs(v - expected));
        } else if (r >= n_in && c < n_in) {
          check.max_block_error = std::max(check.max_block_error, std::abs(v - w(r - n_in, c)));
        } else {
          check.max_upper_error = std::max(check.max_upper_error, std::abs(v));
        }
      }
    }
    ++check.layers;
  }
  return check;
}

std::string_view to_string(CheckLayerKind kind) {
  switch (kind) {
    case CheckLayerKind::dense: return "dense";
    case CheckLayerKind::spectral: return "spectral";
    case CheckLayerKind::spectral_lambda_in: return "spectral+lambda_in";
  }
  return "unknown";
}

Network make_check_network(CheckLayerKind kind, ActivationKind activation, std::span<const std::size_t> dims,
                           SeededRng& rng) {
  if (dims.size() < 3) throw ShapeError("make_check_network: need at least two layers");
  Network net;
  net.activation.kind = activation;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    Matrix w = glorot_uniform(rng, dims[k], dims[k + 1]);
    if (k == 0 && kind != CheckLayerKind::dense) {
      SpectralLayer s;
      s.phi = std::move(w);
      s.lambda_out.resize(dims[1]);
      for (auto& v : s.lambda_out) v = rng.uniform(0.5, 1.5);
      s.lambda_in.assign(dims[0], 0.0);
      if (kind == CheckLayerKind::spectral_lambda_in) {
        for (auto& v : s.lambda_in) v = rng.uniform(-0.5, 0.5);
        s.lambda_in_trainable = true;
      }
      net.layers.emplace_back(std::move(s));
    } else {
      net.layers.emplace_back(DenseLayer{std::move(w)});
    }
  }
  return net;
}

namespace {

double min_hidden_preactivation(const Network& net, std::span<const double> x) {
  Matrix a(1, x.size(), Vector(x.begin(), x.end()));
  double worst = INFINITY;
  for (std::size_t k = 0; k + 1 < net.layers.size(); ++k) {
    Matrix z = forward_batch(net.layers[k], a);
    for (double v : z.entries()) worst = std::min(worst, std::abs(v));
    for (auto& v : z.entries()) v = net.activation.apply(v);
    a = std::move(z);
  }
  return worst;
}

}  // namespace

Dataset make_check_batch(const Network& net, std::size_t n, SeededRng& rng, double margin) {
  Dataset batch;
  const std::size_t dim = net.input_dim();
  batch.inputs = Matrix(n, dim);
  batch.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (auto& v : batch.inputs.row(i)) v = rng.gaussian();
      if (net.activation.kind != ActivationKind::relu || min_hidden_preactivation(net, batch.inputs.row(i)) > margin)
        break;
    }
    batch.targets[i] = rng.gaussian();
  }
  return batch;
}

std::vector<GradSuiteEntry> run_grad_suite(const GradSuiteConfig& cfg) {
  std::vector<GradSuiteEntry> entries;
  for (CheckLayerKind kind : cfg.kinds) {
    for (ActivationKind act : cfg.activations) {
      GradSuiteEntry entry;
      entry.kind = kind;
      entry.activation = act;
      for (std::size_t s = 0; s < cfg.seeds; ++s) {
        SeededRng rng(cfg.base_seed + s);
        const Network net = make_check_network(kind, act, cfg.dims, rng);
        const Dataset batch = make_check_batch(net, cfg.batch, rng);
        const GradCheckReport report = grad_check(net, batch, cfg.reg, cfg.step, cfg.corrupt_scale);
        if (report.max_relative_error > entry.max_relative_error || !std::isfinite(report.max_relative_error)) {
          entry.max_relative_error = report.max_relative_error;
          entry.worst_block = report.worst_block;
        }
        entry.untrainable_gradients_zero = entry.untrainable_gradients_zero && report.untrainable_gradients_zero;
        ++entry.seeds;
      }
      entries.push_back(entry);
    }
  }
  return entries;
}

ConvSpec random_conv_spec(SeededRng& rng) {
  ConvSpec spec;
  for (;;) {
    spec.input_height = 1 + rng.below(8);
    spec.input_width = 1 + rng.below(8);
    spec.filter = Matrix(1 + rng.below(3), 1 + rng.below(3));
    spec.stride_x = 1 + rng.below(2);
    spec.stride_y = 1 + rng.below(2);
    spec.pad_x = rng.below(2);
    spec.pad_y = rng.below(2);
    if (spec.filter.rows() <= spec.input_height + 2 * spec.pad_y &&
        spec.filter.cols() <= spec.input_width + 2 * spec.pad_x)
      break;
  }
  for (auto& w : spec.filter.entries()) w = rng.uniform(-1.0, 1.0);
  return spec;
}

double ConvCheck::max_error() const {
  return std::max({max_toeplitz_error, max_duplicated_error, max_lambda_in_error, max_relevance_error,
                   max_half_relevance_error});
}

ConvCheck check_conv_case(const ConvSpec& spec, SeededRng& rng, std::size_t inputs_per_case) {
  ConvCheck check;
  check.cases = 1;
  const ToeplitzOperator toeplitz = toeplitz_matrix(spec);
  const DuplicatedForm dup = duplicated_form(spec);
  const SpectralLayer lambda_layer = conv_as_lambda_in(spec);
  const SpectralLayer full_relevance = conv_filter_relevance(spec, 1.0);
  const SpectralLayer half_relevance = conv_filter_relevance(spec, 0.5);

  for (std::size_t c = 0; c < dup.binary_phi.cols(); ++c) {
    std::size_t nonzeros = 0;
    for (std::size_t r = 0; r < dup.binary_phi.rows(); ++r) nonzeros += dup.binary_phi(r, c) != 0.0;
    if (nonzeros != 1) check.single_nonzero_columns = false;
  }
  const auto& filter = spec.filter.entries();
  for (double v : toeplitz.matrix.entries()) {
    if (v != 0.0 && std::find(filter.begin(), filter.end(), v) == filter.end())
      check.toeplitz_entries_from_filter = false;
  }

  for (std::size_t t = 0; t < inputs_per_case; ++t) {
    Matrix x(spec.input_height, spec.input_width);
    for (auto& v : x.entries()) v = rng.gaussian();
    const Matrix oracle = direct_conv2d(x, spec);
    const auto& expected = oracle.entries();
    check.max_toeplitz_error =
        std::max(check.max_toeplitz_error, max_abs_diff(matvec(toeplitz.matrix, x.entries()), expected));
    check.max_duplicated_error = std::max(check.max_duplicated_error, max_abs_diff(dup.apply(x.entries()), expected));
    check.max_lambda_in_error = std::max(
        check.max_lambda_in_error, max_abs_diff(spectral_forward(lambda_layer, dup.duplicate(x.entries())), expected));
    check.max_relevance_error =
        std::max(check.max_relevance_error, max_abs_diff(spectral_forward(full_relevance, x.entries()), expected));
    Vector half = expected;
    for (auto& v : half) v *= 0.5;
    check.max_half_relevance_error =
        std::max(check.max_half_relevance_error, max_abs_diff(spectral_forward(half_relevance, x.entries()), half));
  }
  return check;
}

ConvCheck check_conv_equivalence(std::size_t cases, std::uint64_t seed) {
  SeededRng rng(seed);
  ConvCheck total;
  for (std::size_t i = 0; i < cases; ++i) {
    const ConvCheck c = check_conv_case(random_conv_spec(rng), rng);
    total.cases += c.cases;
    total.max_toeplitz_error = std::max(total.max_toeplitz_error, c.max_toeplitz_error);
    total.max_duplicated_error = std::max(total.max_duplicated_error, c.max_duplicated_error);
    total.max_lambda_in_error = std::max(total.max_lambda_in_error, c.max_lambda_in_error);
    total.max_relevance_error = std::max(total.max_relevance_error, c.max_relevance_error);
    total.max_half_relevance_error = std::max(total.max_half_relevance_error, c.max_half_relevance_error);
    total.single_nonzero_columns = total.single_nonzero_columns && c.single_nonzero_columns;
    total.toeplitz_entries_from_filter = total.toeplitz_entries_from_filter && c.toeplitz_entries_from_filter;
  }
  return total;
}

}  // namespace spectral_core
