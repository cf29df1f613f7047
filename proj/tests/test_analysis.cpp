#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spectral_core/analysis.hpp"
#include "spectral_core/experiment.hpp"
#include "support.hpp"

using namespace spectral_core;

namespace {

Network student(std::size_t h, Parametrization p, std::uint64_t seed) {
  const StudentPair pair = build_student_pair(student_spec(h, p, seed));
  return p == Parametrization::spectral ? pair.spectral : pair.standard;
}

Matrix random_inputs(std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  return sample_standard_gaussian(rng, 10, n);
}

// Relabel the first hidden layer of a 3-layer network by perm.
Network permute_hidden(const Network& net, const std::vector<std::size_t>& perm) {
  Network out = net;
  const Matrix w2 = layer_weights(net.layers[1]);
  Matrix w2p(w2.rows(), w2.cols());
  for (std::size_t r = 0; r < w2.rows(); ++r)
    for (std::size_t c = 0; c < w2.cols(); ++c) w2p(r, c) = w2(r, perm[c]);
  out.layers[1] = DenseLayer{w2p};
  if (const auto* s = std::get_if<SpectralLayer>(&net.layers[0])) {
    SpectralLayer p = *s;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      std::copy_n(s->phi.row(perm[i]).begin(), s->phi.cols(), p.phi.row(i).begin());
      p.lambda_out[i] = s->lambda_out[perm[i]];
    }
    out.layers[0] = p;
  } else {
    const Matrix& w1 = std::get<DenseLayer>(net.layers[0]).weights;
    Matrix w1p(w1.rows(), w1.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) std::copy_n(w1.row(perm[i]).begin(), w1.cols(), w1p.row(i).begin());
    out.layers[0] = DenseLayer{w1p};
  }
  return out;
}

}  // namespace

TEST_CASE("standard relevance is the row norm") {
  const DenseLayer layer{Matrix{{3, 4}, {0, 0}, {1, 0}}};
  const auto r = relevance_standard(layer);
  CHECK(r.scores == Vector{5, 0, 1});
  CHECK(r.normalized == Vector{1, 0, 0.2});
}

TEST_CASE("relevance normalization is scale free") {
  SeededRng rng(1);
  const Matrix w = glorot_uniform(rng, 10, 30);
  const auto a = relevance_standard(DenseLayer{w});
  const auto b = relevance_standard(DenseLayer{scale(w, -3.5)});
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(std::abs(b.scores[i] - 3.5 * a.scores[i]) < 1e-12);
    CHECK(std::abs(b.normalized[i] - a.normalized[i]) < 1e-15);
  }
}

TEST_CASE("spectral relevance hand cases") {
  SpectralLayer l{Matrix{{3, 4}, {5, 12}}, {0, 0}, {2, 0}};
  const auto r = relevance_spectral(l);
  CHECK(r.scores == Vector{10, 0});
  SpectralLayer neg{Matrix{{3, 4}}, {0, 0}, {-2}};
  CHECK(relevance_spectral(neg).scores == Vector{10});
  SpectralLayer with_in{Matrix{{3, 4}}, {1, 0}, {1}};
  CHECK_THROWS(relevance_spectral(with_in));
}

TEST_CASE("relevance coincides between paired students at initialization") {
  const StudentPair pair = build_student_pair(student_spec(50, Parametrization::spectral, 3));
  const auto a = relevance(pair.standard.layers[0]);
  const auto b = relevance(pair.spectral.layers[0]);
  CHECK(a.scores == b.scores);
  CHECK(a.normalized == b.normalized);
}

TEST_CASE("scaling eigenvalues keeps the ranking") {
  SeededRng rng(4);
  SpectralLayer l{glorot_uniform(rng, 10, 40), Vector(10, 0.0), Vector(40)};
  for (auto& v : l.lambda_out) v = rng.gaussian();
  const auto before = removal_order(relevance_spectral(l));
  for (auto& v : l.lambda_out) v *= 7.25;
  CHECK(removal_order(relevance_spectral(l)) == before);
}

TEST_CASE("histogram edges") {
  const auto equal = histogram(make_relevance(Vector{2, 2, 2, 2}));
  CHECK(equal.counts.back() == 4);
  CHECK(std::accumulate(equal.counts.begin(), equal.counts.end(), std::size_t{0}) == 4);

  const auto h = histogram(Vector{0.0, 0.5, 1.0});
  REQUIRE(h.counts.size() == 50);
  REQUIRE(h.bin_edges.size() == 51);
  for (std::size_t b = 0; b < 50; ++b) CHECK(h.counts[b] == ((b == 0 || b == 25 || b == 49) ? 1u : 0u));

  SeededRng rng(5);
  Vector scores(137);
  for (auto& v : scores) v = std::abs(rng.gaussian());
  const auto many = histogram(make_relevance(scores));
  CHECK(std::accumulate(many.counts.begin(), many.counts.end(), std::size_t{0}) == 137);
}

TEST_CASE("core size thresholds") {
  CHECK(estimate_core_size(make_relevance(Vector{1, 0.5, 0.001})) == 2);
  CHECK(estimate_core_size(make_relevance(Vector{3, 2, 1, 0.5})) == 4);
  CHECK(core_indices(make_relevance(Vector{0.001, 1, 0.3})) == std::vector<std::size_t>{1, 2});
  CHECK_THROWS(estimate_core_size(make_relevance(Vector{1}), 0.0));
}

TEST_CASE("removal order is ascending with ties by index") {
  CHECK(removal_order(make_relevance(Vector{0.3, 0.1, 0.3, 0.0, 0.1})) == std::vector<std::size_t>{3, 1, 4, 0, 2});
}

TEST_CASE("keeping every node preserves the function") {
  for (auto p : {Parametrization::standard, Parametrization::spectral}) {
    const Network net = student(30, p, 6);
    std::vector<std::size_t> all(30);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Network pruned = prune_to(net, all);
    const Matrix x = random_inputs(100, 7);
    CHECK(max_abs_diff(forward_batch(pruned, x), forward_batch(net, x)) <= 1e-12);
  }
}

TEST_CASE("removing a silent node preserves the function") {
  Network net = student(12, Parametrization::spectral, 8);
  std::get<SpectralLayer>(net.layers[0]).lambda_out[5] = 0.0;
  auto& w2 = std::get<DenseLayer>(net.layers[1]).weights;
  for (std::size_t r = 0; r < w2.rows(); ++r) w2(r, 5) = 0.0;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < 12; ++i)
    if (i != 5) keep.push_back(i);
  const Network pruned = prune_to(net, keep);
  CHECK(layer_n_out(pruned.layers[0]) == 11);
  CHECK(layer_n_in(pruned.layers[1]) == 11);
  const Matrix x = random_inputs(100, 9);
  CHECK(max_abs_diff(forward_batch(pruned, x), forward_batch(net, x)) <= 1e-12);
}

TEST_CASE("prune_to validates the keep set") {
  const Network net = student(5, Parametrization::standard, 1);
  CHECK_THROWS(prune_to(net, std::vector<std::size_t>{}));
  CHECK_THROWS(prune_to(net, std::vector<std::size_t>{1, 1}));
  CHECK_THROWS(prune_to(net, std::vector<std::size_t>{5}));
}

TEST_CASE("prune curve over zero-contribution tail nodes") {
  // The last 6 of 10 nodes carry no signal; removal goes through them first.
  const std::size_t h = 10, k = 4;
  Network net = student(h, Parametrization::spectral, 10);
  auto& s = std::get<SpectralLayer>(net.layers[0]);
  for (std::size_t i = k; i < h; ++i) s.lambda_out[i] = 0.0;
  const Network teacher = build_teacher(TeacherSpec{});
  const Dataset test = generate_dataset(teacher, 200, 11);
  const auto curve = prune_curve(net, relevance(net.layers[0]), test, 20);
  REQUIRE(curve.points.size() == h - 1);
  CHECK(curve.points.front().n_lambda == h - 1);
  CHECK(curve.points.back().n_lambda == 1);
  CHECK(curve.n_teacher == 20);
  CHECK(curve.full_mse == mse(net, test));
  for (const auto& p : curve.points)
    if (p.n_lambda >= k) CHECK(std::abs(p.delta_mse) <= 1e-12);
}

TEST_CASE("path tensor hand cases") {
  Network ones;
  ones.layers = {DenseLayer{Matrix(2, 2, 1.0)}, DenseLayer{Matrix(2, 2, 1.0)}};
  const auto g = path_tensor(ones);
  CHECK(g.values == Vector(8, 1.0));

  Network single;
  single.layers = {DenseLayer{Matrix{{2}}}, DenseLayer{Matrix{{3}}}};
  CHECK(path_tensor(single).values == Vector{6});

  Network one_layer;
  one_layer.layers = {DenseLayer{Matrix{{2}}}};
  CHECK_THROWS(path_tensor(one_layer));
}

TEST_CASE("path tensor entries are products of consecutive weights") {
  const Network net = student(7, Parametrization::spectral, 12);
  const Matrix w1 = layer_weights(net.layers[0]);
  const Matrix w2 = layer_weights(net.layers[1]);
  const auto g = path_tensor(net);
  REQUIRE(g.values.size() == 10 * 7 * 20);
  for (std::size_t i0 = 0; i0 < 10; ++i0)
    for (std::size_t i1 = 0; i1 < 7; ++i1)
      for (std::size_t i2 = 0; i2 < 20; ++i2) CHECK(g(i0, i1, i2) == w1(i1, i0) * w2(i2, i1));
}

TEST_CASE("pruning a hidden node removes its paths") {
  const Network net = student(6, Parametrization::standard, 13);
  const auto full = path_tensor(net);
  const auto pruned = path_tensor(prune_to(net, std::vector<std::size_t>{0, 1, 3, 4, 5}));
  CHECK(full.values.size() - pruned.values.size() == full.n0 * full.n2);
  for (std::size_t i0 = 0; i0 < full.n0; ++i0)
    for (std::size_t i2 = 0; i2 < full.n2; ++i2) CHECK(pruned(i0, 2, i2) == full(i0, 3, i2));
}

TEST_CASE("path spectrum sorting") {
  const auto s = path_spectrum(Vector{2, -1, 0});
  CHECK(s.sorted_values == Vector{-1, 0, 2});
  CHECK(s.frac_index == Vector{0, 0.5, 1});

  const auto flat = path_spectrum(Vector(9, 0.25));
  CHECK(flat.sorted_values == Vector(9, 0.25));

  const auto one = path_spectrum(Vector{4});
  CHECK(one.frac_index == Vector{0});
  CHECK_THROWS(path_spectrum(Vector{}));
}

TEST_CASE("path spectrum ignores hidden relabeling") {
  const Network net = student(9, Parametrization::spectral, 14);
  std::vector<std::size_t> perm{3, 8, 0, 1, 7, 2, 6, 5, 4};
  const Network permuted = permute_hidden(net, perm);
  const Matrix x = random_inputs(10, 1);
  CHECK(max_abs_diff(forward_batch(permuted, x), forward_batch(net, x)) < 1e-12);
  CHECK(path_spectrum(path_tensor(permuted)).sorted_values == path_spectrum(path_tensor(net)).sorted_values);
}

TEST_CASE("spectrum distance") {
  const auto a = path_spectrum(Vector{0, 0, 0});
  const auto b = path_spectrum(Vector(5, 1.0));
  CHECK(spectrum_distance(a, a) == 0.0);
  CHECK(std::abs(spectrum_distance(a, b) - 1.0) < 1e-15);

  // Linear ramps 0..1 against the constant 0: RMS of u over a uniform grid.
  const auto ramp = path_spectrum(Vector{0, 1});
  double acc = 0.0;
  for (int k = 0; k < 1000; ++k) acc += std::pow(k / 999.0, 2);
  CHECK(std::abs(spectrum_distance(ramp, a) - std::sqrt(acc / 1000.0)) < 1e-14);

  SeededRng rng(15);
  Vector va(40), vb(77);
  for (auto& v : va) v = rng.gaussian();
  for (auto& v : vb) v = rng.gaussian();
  const auto sa = path_spectrum(va), sb = path_spectrum(vb);
  CHECK(spectrum_distance(sa, sb) == spectrum_distance(sb, sa));
}
