#include <doctest.h>

#include <cmath>

#include "spectral_core/checks.hpp"
#include "spectral_core/layers.hpp"

using namespace spectral_core;

namespace {

// Direct elementwise evaluation of the spectral weights.
Matrix spectral_weights_oracle(const SpectralLayer& l) {
  Matrix w(l.n_out(), l.n_in());
  for (std::size_t i = 0; i < l.n_out(); ++i)
    for (std::size_t j = 0; j < l.n_in(); ++j) w(i, j) = (l.lambda_in[j] - l.lambda_out[i]) * l.phi(i, j);
  return w;
}

Vector random_vector(SeededRng& rng, std::size_t n) {
  Vector v(n);
  for (auto& e : v) e = rng.gaussian();
  return v;
}

SpectralLayer layer_with_lambda_in(SeededRng& rng, std::size_t n_in, std::size_t n_out) {
  SpectralLayer l = random_spectral_layer(rng, n_in, n_out);
  for (auto& v : l.lambda_in) v = rng.gaussian();
  l.lambda_in_trainable = true;
  return l;
}

}  // namespace

TEST_CASE("effective weights hand cases") {
  SpectralLayer a{Matrix{{2, 3}}, {0, 0}, {1}};
  CHECK(effective_weights(a) == Matrix{{-2, -3}});

  SpectralLayer b{Matrix{{1, 2}, {3, 4}}, {2, 3}, {1, -1}};
  CHECK(effective_weights(b) == Matrix{{1, 4}, {9, 16}});

  SpectralLayer c{Matrix{{1, 2}, {3, 4}}, {0.7, 0.7}, {0.7, 0.7}};
  CHECK(effective_weights(c) == Matrix(2, 2, 0.0));
}

TEST_CASE("effective weights match the elementwise oracle") {
  SeededRng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const auto l = layer_with_lambda_in(rng, 1 + rng.below(9), 1 + rng.below(9));
    CHECK(max_abs_diff(effective_weights(l), spectral_weights_oracle(l)) == 0.0);
  }
}

TEST_CASE("dense forward hand cases") {
  const DenseLayer eye{Matrix::identity(3)};
  const Vector x{0.5, -1, 2};
  CHECK(dense_forward(eye, x) == x);
  CHECK(dense_forward(DenseLayer{Matrix{{1, 2}, {3, 4}}}, Vector{0, 0}) == Vector{0, 0});
  CHECK(dense_forward(DenseLayer{Matrix{{1, 2}, {3, 4}}}, Vector{1, -1}) == Vector{-1, -1});
  CHECK_THROWS_AS(dense_forward(eye, Vector{1, 2}), ShapeError);
}

TEST_CASE("spectral forward at the paired initialization equals the dense layer") {
  SeededRng rng(21);
  const Matrix w = glorot_uniform(rng, 10, 30);
  SpectralLayer s{scale(w, -1.0), Vector(10, 0.0), Vector(30, 1.0)};
  for (int rep = 0; rep < 20; ++rep) {
    const Vector x = random_vector(rng, 10);
    const Vector a = dense_forward(DenseLayer{w}, x);
    const Vector b = spectral_forward(s, x);
    CHECK(max_abs_diff(a, b) < 1e-12);
  }
  CHECK(spectral_forward(s, Vector(10, 0.0)) == Vector(30, 0.0));
}

TEST_CASE("spectral forward matches the oracle on random layers") {
  SeededRng rng(22);
  for (int rep = 0; rep < 100; ++rep) {
    const auto l = layer_with_lambda_in(rng, 4, 3);
    const Vector x = random_vector(rng, 4);
    const Vector expected = matvec(spectral_weights_oracle(l), x);
    CHECK(max_abs_diff(spectral_forward(l, x), expected) < 1e-12);
    CHECK(max_abs_diff(embed_and_transfer(l, x), expected) < 1e-12);
  }
}

TEST_CASE("full eigenvector and eigenvalue matrices") {
  SpectralLayer zero{Matrix(2, 3, 0.0), {1, 2, 3}, {4, 5}};
  CHECK(build_full_phi(zero) == Matrix::identity(5));

  SpectralLayer one{Matrix{{3}}, {2}, {1}};
  CHECK(build_full_phi(one) == Matrix{{1, 0}, {3, 1}});
  CHECK(build_full_lambda(one) == Matrix{{2, 0}, {0, 1}});

  SeededRng rng(5);
  const auto l = random_spectral_layer(rng, 6, 4);
  const Matrix full = build_full_phi(l);
  for (std::size_t i = 0; i < full.rows(); ++i) CHECK(full(i, i) == 1.0);
}

TEST_CASE("analytic inverse of the eigenvector matrix") {
  CHECK(phi_inverse(Matrix::identity(4)) == Matrix::identity(4));
  const Matrix phi{{1, 0}, {0.5, 1}};
  const Matrix inv = phi_inverse(phi);
  CHECK(inv == Matrix{{1, 0}, {-0.5, 1}});
  CHECK(matmul(phi, inv) == Matrix::identity(2));

  SeededRng rng(6);
  const auto l = random_spectral_layer(rng, 4, 4);
  const Matrix full = build_full_phi(l);
  CHECK(max_abs_diff(matmul(full, phi_inverse(full, 4)), Matrix::identity(8)) < 1e-12);
}

TEST_CASE("inverse rejects matrices without the block structure") {
  CHECK_THROWS(phi_inverse(Matrix{{1, 1}, {0, 1}}, 1));
  CHECK_THROWS(phi_inverse(Matrix{{2, 0}, {0, 1}}, 1));
}

TEST_CASE("composition of the eigen-decomposition") {
  SpectralLayer zero{Matrix(2, 3, 0.0), {1, 2, 3}, {4, 5}};
  Matrix lambda = Matrix(5, 5, 0.0);
  for (std::size_t i = 0; i < 5; ++i) lambda(i, i) = static_cast<double>(i + 1);
  CHECK(spectral_compose(zero) == lambda);

  SpectralLayer one{Matrix{{3}}, {2}, {1}};
  CHECK(spectral_compose(one) == Matrix{{2, 0}, {3, 1}});

  SeededRng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const auto l = layer_with_lambda_in(rng, 3, 2);
    const Matrix a = spectral_compose(l);
    const Matrix w = spectral_weights_oracle(l);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(a(3 + i, j) - w(i, j)) < 1e-12);
  }
}

TEST_CASE("embedded transfer keeps the source part on the diagonal") {
  SeededRng rng(8);
  const auto l = layer_with_lambda_in(rng, 5, 3);
  const Vector x = random_vector(rng, 5);
  const auto full = embed_and_transfer_full(l, x);
  const Vector expected = hadamard(l.lambda_in, x);
  CHECK(max_abs_diff(full.source_part, expected) < 1e-12);
  CHECK(max_abs_diff(full.destination_part, spectral_forward(l, x)) < 1e-12);
  CHECK(embed_and_transfer(l, Vector(5, 0.0)) == Vector(3, 0.0));
}

TEST_CASE("algebraic identities over random layers") {
  const IdentityCheck c = check_algebraic_identities(200, 16, 99);
  CHECK(c.layers == 200);
  CHECK(c.max_inverse_error < 1e-12);
  CHECK(c.max_block_error < 1e-12);
  CHECK(c.max_diagonal_error < 1e-12);
  CHECK(c.max_upper_error == 0.0);
}

TEST_CASE("backward with zero upstream gives zero gradients") {
  SeededRng rng(9);
  const auto l = layer_with_lambda_in(rng, 4, 3);
  const Matrix x = sample_standard_gaussian(rng, 4, 5);
  const auto g = spectral_backward(l, x, Matrix(5, 3, 0.0));
  CHECK(g.d_phi == Matrix(3, 4, 0.0));
  CHECK(g.d_lambda_in == Vector(4, 0.0));
  CHECK(g.d_lambda_out == Vector(3, 0.0));
  CHECK(g.d_input == Matrix(5, 4, 0.0));
}

TEST_CASE("backward hand case") {
  SpectralLayer l{Matrix{{2}}, {0}, {1}};
  const auto g = spectral_backward(l, Matrix{{3}}, Matrix{{1}});
  CHECK(g.d_phi(0, 0) == -3.0);
  CHECK(g.d_lambda_out[0] == -6.0);
  CHECK(g.d_input(0, 0) == -2.0);
  CHECK(g.d_lambda_in[0] == 0.0);  // untrainable
}

TEST_CASE("dense backward hand case") {
  DenseLayer l{Matrix{{1, 2}}};
  const auto g = dense_backward(l, Matrix{{3, 4}}, Matrix{{2}});
  CHECK(g.d_weights == Matrix{{6, 8}});
  CHECK(g.d_input == Matrix{{2, 4}});
}

TEST_CASE("layer gradients match central differences") {
  // Scalar loss 0.5 * sum(z^2); its gradient with respect to z is z.
  SeededRng rng(10);
  const double step = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    SpectralLayer l = layer_with_lambda_in(rng, 1 + rng.below(8), 1 + rng.below(8));
    Matrix x = sample_standard_gaussian(rng, l.n_in(), 3);
    // Extended-precision oracle straight from the elementwise weight formula.
    const auto loss = [&](const SpectralLayer& p, const Matrix& in) {
      long double acc = 0.0L;
      for (std::size_t b = 0; b < in.rows(); ++b)
        for (std::size_t i = 0; i < p.n_out(); ++i) {
          long double z = 0.0L;
          for (std::size_t j = 0; j < p.n_in(); ++j)
            z += (static_cast<long double>(p.lambda_in[j]) - p.lambda_out[i]) * p.phi(i, j) * in(b, j);
          acc += 0.5L * z * z;
        }
      return acc;
    };
    const Matrix z = forward_batch(Layer{l}, x);
    const auto g = spectral_backward(l, x, z);
    double worst = 0.0;
    const auto probe = [&](double& param, double analytic, const SpectralLayer& p, const Matrix& in) {
      const double saved = param;
      const double plus = saved + step, minus = saved - step;
      param = plus;
      const long double up = loss(p, in);
      param = minus;
      const long double down = loss(p, in);
      param = saved;
      const double numeric = static_cast<double>((up - down) / (plus - minus));
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-4}));
    };
    for (std::size_t i = 0; i < l.n_out(); ++i)
      for (std::size_t j = 0; j < l.n_in(); ++j) probe(l.phi(i, j), g.d_phi(i, j), l, x);
    for (std::size_t j = 0; j < l.n_in(); ++j) probe(l.lambda_in[j], g.d_lambda_in[j], l, x);
    for (std::size_t i = 0; i < l.n_out(); ++i) probe(l.lambda_out[i], g.d_lambda_out[i], l, x);
    for (std::size_t b = 0; b < x.rows(); ++b)
      for (std::size_t j = 0; j < x.cols(); ++j) probe(x(b, j), g.d_input(b, j), l, x);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("activation values and derivatives") {
  const Activation tanh_act{ActivationKind::tanh};
  const Activation erf_act{ActivationKind::erf_scaled};
  const Activation relu{ActivationKind::relu};
  const Activation ident{ActivationKind::identity};
  for (const Activation& a : {tanh_act, erf_act, relu, ident}) CHECK(a.apply(0.0) == 0.0);

  for (double z : {-30.0, -3.0, -0.7, -1e-9, 0.0, 1e-9, 0.2, 1.5, 19.0, 400.0}) {
    CHECK(std::abs(tanh_act.apply(z) - std::tanh(z)) < 1e-15);
    CHECK(std::abs(erf_act.apply(z) - std::erf(z / std::sqrt(2.0))) < 1e-15);
    CHECK(relu.apply(z) == std::max(z, 0.0));
    CHECK(ident.apply(z) == z);
  }
  CHECK(relu.derivative(0.0) == 0.0);
  CHECK(relu.derivative(2.0) == 1.0);
  CHECK(ident.derivative(-4.0) == 1.0);

  for (const Activation& a : {tanh_act, erf_act}) {
    for (double z : {-2.0, -0.3, 0.0, 0.8, 2.5}) {
      const double h = 1e-6;
      const double numeric = (a.apply(z + h) - a.apply(z - h)) / (2 * h);
      CHECK(std::abs(numeric - a.derivative(z)) < 1e-8);
    }
  }
}

TEST_CASE("batched activation agrees with the scalar form") {
  SeededRng rng(13);
  Vector z(257);
  for (auto& v : z) v = 4.0 * rng.gaussian();
  for (auto kind : {ActivationKind::tanh, ActivationKind::erf_scaled, ActivationKind::relu, ActivationKind::identity}) {
    const Activation a{kind};
    Vector out(z.size()), slope(z.size());
    a.apply(z, out, slope);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(out[i] == a.apply(z[i]));
      CHECK(slope[i] == a.derivative(z[i]));
    }
    Vector in_place = z;
    a.apply(in_place, in_place);
    CHECK(in_place == out);
  }
}

TEST_CASE("activation names") {
  CHECK(parse_activation("tanh") == ActivationKind::tanh);
  CHECK(parse_activation("erf") == ActivationKind::erf_scaled);
  CHECK(parse_activation("relu") == ActivationKind::relu);
  CHECK(parse_activation("linear") == ActivationKind::identity);
  for (auto kind : {ActivationKind::tanh, ActivationKind::erf_scaled, ActivationKind::relu, ActivationKind::identity})
    CHECK(parse_activation(to_string(kind)) == kind);
  CHECK_THROWS(parse_activation("sigmoid"));
}

TEST_CASE("spectral layer validation") {
  SpectralLayer bad{Matrix(2, 3), Vector(2, 0.0), Vector(2, 1.0)};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  CHECK_THROWS(spectral_forward(bad, Vector(3, 0.0)));
}
