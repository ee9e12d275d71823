#include "doctest.h"

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "muonlab/errors.hpp"
#include "muonlab/linalg.hpp"
#include "muonlab/optim.hpp"

using namespace muonlab;
using testutil::random_matrix;

namespace {

Hyperparams hp_with(double lr, double mu = 0.9) {
  Hyperparams hp;
  hp.learning_rate = lr;
  hp.momentum = mu;
  return hp;
}

/// Applies `steps` updates with the same gradient sequence and returns the parameter.
Matrix run(OptimizerKind kind, Hyperparams hp, Matrix w, const std::vector<Matrix>& grads) {
  Optimizer opt(kind, hp);
  for (const auto& g : grads) {
    Matrix* p = &w;
    opt.step(std::span<Matrix* const>(&p, 1), std::span<const Matrix>(&g, 1));
  }
  return w;
}

}  // namespace

TEST_CASE("names round-trip and aliases parse") {
  for (auto k : {OptimizerKind::GD, OptimizerKind::MomentumGD, OptimizerKind::SpectralGD,
                 OptimizerKind::SpectralMomentumGD, OptimizerKind::Muon, OptimizerKind::Adam})
    CHECK(parse_optimizer_kind(to_string(k)) == k);
  CHECK(parse_optimizer_kind("sgd") == OptimizerKind::MomentumGD);
  CHECK_THROWS_AS(parse_optimizer_kind("lion"), InvalidInput);
  CHECK(is_spectral(OptimizerKind::Muon));
  CHECK_FALSE(is_spectral(OptimizerKind::MomentumGD));
  CHECK(uses_momentum(OptimizerKind::SpectralMomentumGD));
  CHECK_FALSE(uses_momentum(OptimizerKind::SpectralGD));
}

TEST_CASE("hyperparameter validation") {
  CHECK_NOTHROW(Hyperparams{}.validate());
  CHECK_THROWS_AS(hp_with(0.0).validate(), InvalidInput);
  CHECK_THROWS_AS(hp_with(-1.0).validate(), InvalidInput);
  CHECK_THROWS_AS(hp_with(0.1, 1.0).validate(), InvalidInput);
  CHECK_THROWS_AS(hp_with(0.1, -0.1).validate(), InvalidInput);
  Hyperparams hp;
  hp.ns_iterations = 0;
  CHECK_THROWS_AS(hp.validate(), InvalidInput);
  hp = {};
  hp.adam_eps = 0.0;
  CHECK_THROWS_AS(hp.validate(), InvalidInput);
}

TEST_CASE("gd example") {
  const Matrix w = run(OptimizerKind::GD, hp_with(0.1), Matrix::identity(2), {Matrix::identity(2)});
  CHECK(max_abs_difference(w, 0.9 * Matrix::identity(2)) < 1e-15);
}

TEST_CASE("spectral gd gives every direction a full step") {
  Hyperparams hp = hp_with(0.1);
  hp.rank_cutoff = 0.0;
  const Matrix w = run(OptimizerKind::SpectralGD, hp, Matrix::identity(2), {Matrix{{5, 0}, {0, 0.001}}});
  CHECK(max_abs_difference(w, 0.9 * Matrix::identity(2)) < 1e-15);
}

TEST_CASE("momentum gd matches the heavy-ball oracle") {
  std::mt19937_64 gen(1);
  std::vector<Matrix> grads;
  for (int i = 0; i < 5; ++i) grads.push_back(random_matrix(gen, 3, 4));
  const Matrix w0 = random_matrix(gen, 3, 4);
  Matrix w = w0, g(3, 4);
  for (const auto& gr : grads) {
    g = 0.9 * g + gr;
    w = w - 0.05 * g;
  }
  CHECK(max_abs_difference(run(OptimizerKind::MomentumGD, hp_with(0.05), w0, grads), w) < 1e-14);
}

TEST_CASE("spectral momentum matches orth of the accumulated buffer") {
  std::mt19937_64 gen(2);
  std::vector<Matrix> grads;
  for (int i = 0; i < 4; ++i) grads.push_back(random_matrix(gen, 5, 3));
  const Matrix w0 = random_matrix(gen, 5, 3);
  Matrix w = w0, g(5, 3);
  for (const auto& gr : grads) {
    g = 0.9 * g + gr;
    w = w - 0.02 * orthogonalize_exact(g);
  }
  CHECK(max_abs_difference(run(OptimizerKind::SpectralMomentumGD, hp_with(0.02), w0, grads), w) < 1e-12);
}

TEST_CASE("muon buffer and direction with a constant gradient") {
  std::mt19937_64 gen(3);
  const Matrix grad = random_matrix(gen, 6, 12);
  Matrix w(6, 12);
  Optimizer opt(OptimizerKind::Muon, hp_with(0.1));
  Matrix* p = &w;
  opt.step(std::span<Matrix* const>(&p, 1), std::span<const Matrix>(&grad, 1));
  const Matrix w1 = w;
  opt.step(std::span<Matrix* const>(&p, 1), std::span<const Matrix>(&grad, 1));
  CHECK(max_abs_difference(opt.momentum_buffers().at(0), 1.9 * grad) < 1e-12);
  const Matrix update = w1 - w;
  // Scaling is absorbed by the normalization, so the step is NS(∇) exactly.
  CHECK(max_abs_difference(update, 0.1 * newton_schulz_orthogonalize(grad, 5)) < 1e-12);
  // And it is close to the exact orthogonalization within the bracket.
  const double bound = 0.35 * std::sqrt(6.0) * 0.1;
  CHECK(frobenius_norm(update - 0.1 * orthogonalize_exact(grad)) <= bound);
}

TEST_CASE("adam first step moves each entry by about eta against the gradient sign") {
  Matrix w(2, 2);
  const Matrix g{{2.0, -0.5}, {1e-3, -7.0}};
  w = run(OptimizerKind::Adam, hp_with(0.01), w, {g});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double expected = -0.01 * g(i, j) / (std::abs(g(i, j)) + 1e-8);
      CHECK(w(i, j) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("adam matches the bias-corrected oracle over several steps") {
  std::mt19937_64 gen(4);
  std::vector<Matrix> grads;
  for (int i = 0; i < 6; ++i) grads.push_back(random_matrix(gen, 2, 3));
  const Matrix w0 = random_matrix(gen, 2, 3);
  Matrix w = w0, m(2, 3), v(2, 3);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.003;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const Matrix& g = grads[t - 1];
    for (std::size_t k = 0; k < g.size(); ++k) {
      m.data()[k] = b1 * m.data()[k] + (1 - b1) * g.data()[k];
      v.data()[k] = b2 * v.data()[k] + (1 - b2) * g.data()[k] * g.data()[k];
      const double mh = m.data()[k] / (1 - std::pow(b1, t));
      const double vh = v.data()[k] / (1 - std::pow(b2, t));
      w.data()[k] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  CHECK(max_abs_difference(run(OptimizerKind::Adam, hp_with(lr), w0, grads), w) < 1e-13);
}

TEST_CASE("spectral update has operator norm exactly eta and ignores gradient scale") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = random_matrix(gen, 2 + trial % 6, 3 + trial % 4);
    const Matrix w0 = random_matrix(gen, g.rows(), g.cols());
    const Matrix w = run(OptimizerKind::SpectralGD, hp_with(0.07), w0, {g});
    for (double s : singular_values(w0 - w)) CHECK(std::abs(s - 0.07) < 1e-9);
    for (double c : {1e-3, 4.0, 1e5})
      CHECK(max_abs_difference(run(OptimizerKind::SpectralGD, hp_with(0.07), w0, {c * g}), w) < 1e-9);
  }
}

TEST_CASE("zero momentum reduces to the plain variants exactly") {
  std::mt19937_64 gen(6);
  std::vector<Matrix> grads;
  for (int i = 0; i < 4; ++i) grads.push_back(random_matrix(gen, 4, 4));
  const Matrix w0 = random_matrix(gen, 4, 4);
  CHECK(run(OptimizerKind::MomentumGD, hp_with(0.1, 0.0), w0, grads) == run(OptimizerKind::GD, hp_with(0.1, 0.0), w0, grads));
  CHECK(run(OptimizerKind::SpectralMomentumGD, hp_with(0.1, 0.0), w0, grads) ==
        run(OptimizerKind::SpectralGD, hp_with(0.1, 0.0), w0, grads));
}

TEST_CASE("muon stays within the NS bracket of spectral momentum") {
  std::mt19937_64 gen(7);
  std::vector<Matrix> grads;
  for (int i = 0; i < 5; ++i) grads.push_back(random_matrix(gen, 8, 20));
  const Matrix w0(8, 20);
  Hyperparams hp = hp_with(0.05);
  for (int iters : {5, 10, 30}) {
    hp.ns_iterations = iters;
    Optimizer muon(OptimizerKind::Muon, hp), spec(OptimizerKind::SpectralMomentumGD, hp);
    Matrix a = w0, b = w0;
    for (const auto& g : grads) {
      const Matrix before_a = a, before_b = b;
      Matrix* pa = &a;
      Matrix* pb = &b;
      muon.step(std::span<Matrix* const>(&pa, 1), std::span<const Matrix>(&g, 1));
      spec.step(std::span<Matrix* const>(&pb, 1), std::span<const Matrix>(&g, 1));
      CHECK(frobenius_norm((before_a - a) - (before_b - b)) <= 0.35 * std::sqrt(8.0) * 0.05);
    }
  }
}

TEST_CASE("zero spectral input skips the update") {
  const Matrix w0{{1, 2}, {3, 4}};
  for (auto k : {OptimizerKind::SpectralGD, OptimizerKind::SpectralMomentumGD, OptimizerKind::Muon})
    CHECK(run(k, hp_with(0.1), w0, {Matrix(2, 2)}) == w0);
}

TEST_CASE("shape mismatch is rejected") {
  Optimizer opt(OptimizerKind::MomentumGD, hp_with(0.1));
  Matrix w(2, 2);
  const Matrix g(2, 3);
  Matrix* p = &w;
  CHECK_THROWS_AS(opt.step(std::span<Matrix* const>(&p, 1), std::span<const Matrix>(&g, 1)), InvalidInput);
  const Matrix ok(2, 2);
  opt.step(std::span<Matrix* const>(&p, 1), std::span<const Matrix>(&ok, 1));
  // Buffers are pinned to the shapes of the first step.
  Matrix other(3, 3);
  Matrix* q = &other;
  const Matrix g3(3, 3);
  CHECK_THROWS_AS(opt.step(std::span<Matrix* const>(&q, 1), std::span<const Matrix>(&g3, 1)), InvalidInput);
}

TEST_CASE("gd decreases random convex quadratics for a small step") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix b = random_matrix(gen, 5, 5);
    const Matrix a = transpose_multiply(b, b);  // PSD
    const Matrix target = random_matrix(gen, 5, 2);
    Matrix w = random_matrix(gen, 5, 2);
    // L(W) = ½ tr((W − T)ᵀ A (W − T)), ∇ = A (W − T).
    const auto loss = [&](const Matrix& x) { return 0.5 * inner(x - target, a * (x - target)); };
    const double lr = 0.5 / operator_norm(a);
    const double before = loss(w);
    w = run(OptimizerKind::GD, hp_with(lr), w, {a * (w - target)});
    CHECK(loss(w) < before);
  }
}
