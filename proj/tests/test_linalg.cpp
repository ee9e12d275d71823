#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "muonlab/errors.hpp"
#include "muonlab/linalg.hpp"

using namespace muonlab;
using testutil::random_matrix;

namespace {

double orthonormality_error(const Matrix& q_cols) {
  const Matrix g = transpose_multiply(q_cols, q_cols);
  return max_abs_difference(g, Matrix::identity(g.rows()));
}

}  // namespace

TEST_CASE("svd of a positive diagonal is the identity factorization") {
  const auto r = svd_compact(Matrix{{3, 0}, {0, 2}});
  CHECK(r.rank() == 2);
  CHECK(r.s[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(r.s[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(max_abs_difference(r.u, Matrix::identity(2)) < 1e-15);
  CHECK(max_abs_difference(r.vt, Matrix::identity(2)) < 1e-15);
}

TEST_CASE("svd of the zero matrix is empty") {
  const auto r = svd_compact(Matrix(2, 2));
  CHECK(r.rank() == 0);
  CHECK(r.s.empty());
}

TEST_CASE("svd rejects non-finite input") {
  Matrix a(2, 2, 1.0);
  a(1, 0) = std::nan("");
  CHECK_THROWS_AS(svd_compact(a), InvalidInput);
  a(1, 0) = INFINITY;
  CHECK_THROWS_AS(svd_compact(a), InvalidInput);
}

TEST_CASE("svd singular values match the eigen-solver oracle on a 5x3 matrix") {
  std::mt19937_64 gen(7);
  const Matrix a = random_matrix(gen, 5, 3);
  const auto r = svd_compact(a);
  const auto oracle = testutil::oracle_singular_values(a);
  REQUIRE(r.rank() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(r.s[i] - oracle[i]) < 1e-9);
}

TEST_CASE("svd invariants hold over random shapes up to 64") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = dim(gen), n = dim(gen);
    const Matrix a = random_matrix(gen, m, n);
    const auto r = svd_compact(a);
    CAPTURE(m);
    CAPTURE(n);
    REQUIRE(r.rank() == std::min(m, n));
    CHECK(orthonormality_error(r.u) < 1e-10);
    CHECK(orthonormality_error(r.vt.transpose()) < 1e-10);
    CHECK(frobenius_norm(r.reconstruct() - a) <= 1e-9 * frobenius_norm(a));
    for (std::size_t i = 1; i < r.rank(); ++i) CHECK(r.s[i] <= r.s[i - 1]);
    // Sign convention: first nonzero entry of each left vector is non-negative.
    for (std::size_t k = 0; k < r.rank(); ++k) {
      for (std::size_t i = 0; i < m; ++i) {
        if (r.u(i, k) != 0.0) {
          CHECK(r.u(i, k) > 0.0);
          break;
        }
      }
    }
    const auto oracle = testutil::oracle_singular_values(a);
    for (std::size_t i = 0; i < r.rank(); ++i) CHECK(std::abs(r.s[i] - oracle[i]) < 1e-8 * std::max(1.0, oracle[0]));
  }
}

TEST_CASE("svd is deterministic") {
  std::mt19937_64 gen(3);
  const Matrix a = random_matrix(gen, 9, 6);
  const auto r1 = svd_compact(a);
  const auto r2 = svd_compact(a);
  CHECK(r1.u == r2.u);
  CHECK(r1.s == r2.s);
  CHECK(r1.vt == r2.vt);
}

TEST_CASE("svd drops directions below the relative cutoff") {
  std::mt19937_64 gen(5);
  // Rank-2 matrix in 6x5.
  const Matrix a = random_matrix(gen, 6, 2) * random_matrix(gen, 2, 5);
  CHECK(svd_compact(a).rank() == 2);
  CHECK(svd_compact(a, 0.0).rank() == 2);
  const Matrix d = Matrix::diagonal(Vector{1.0, 1e-3, 1e-8});
  CHECK(svd_compact(d, 1e-6).rank() == 2);
  CHECK(svd_compact(d, 1e-2).rank() == 1);
  CHECK(svd_compact(d, 0.0).rank() == 3);
}

TEST_CASE("transpose duality swaps the factors") {
  std::mt19937_64 gen(13);
  const Matrix a = random_matrix(gen, 7, 4);
  const auto r = svd_compact(a);
  const auto rt = svd_compact(a.transpose());
  REQUIRE(r.rank() == rt.rank());
  for (std::size_t i = 0; i < r.rank(); ++i) CHECK(std::abs(r.s[i] - rt.s[i]) < 1e-12);
  // Factors agree up to a per-column sign.
  for (std::size_t k = 0; k < r.rank(); ++k) {
    CHECK(std::abs(std::abs(dot(r.u.column(k), rt.vt.row(k))) - 1.0) < 1e-10);
    CHECK(std::abs(std::abs(dot(r.vt.row(k), rt.u.column(k))) - 1.0) < 1e-10);
  }
}

TEST_CASE("orthogonalize_exact examples") {
  CHECK(max_abs_difference(orthogonalize_exact(Matrix{{3, 0}, {0, 2}}), Matrix::identity(2)) < 1e-15);

  std::mt19937_64 gen(17);
  Vector u = random_matrix(gen, 5, 1).column(0);
  Vector v = random_matrix(gen, 3, 1).column(0);
  const double nu = norm2(u), nv = norm2(v);
  for (double& x : u) x /= nu;
  for (double& x : v) x /= nv;
  const Matrix uv = Matrix::outer(u, v);
  CHECK(max_abs_difference(orthogonalize_exact(7.0 * uv), uv) < 1e-12);

  CHECK(orthogonalize_exact(Matrix(3, 2)).is_zero());
  CHECK(orthogonalize_exact(Matrix(3, 2)).same_shape(Matrix(3, 2)));

  const Matrix g = random_matrix(gen, 4, 6);
  const auto s = testutil::oracle_singular_values(orthogonalize_exact(g));
  REQUIRE(s.size() == 4);
  for (double x : s) CHECK(std::abs(x - 1.0) <= 1e-10);
}

TEST_CASE("orthogonalize_exact preserves rank") {
  std::mt19937_64 gen(19);
  const Matrix g = random_matrix(gen, 8, 3) * random_matrix(gen, 3, 6);
  const Matrix q = orthogonalize_exact(g);
  const auto r = svd_compact(q);
  CHECK(r.rank() == 3);
  for (double x : r.s) CHECK(std::abs(x - 1.0) < 1e-10);
}

TEST_CASE("orthogonalization is idempotent and scale invariant") {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = random_matrix(gen, 3 + trial % 7, 2 + trial % 5);
    const Matrix q = orthogonalize_exact(g);
    CHECK(max_abs_difference(orthogonalize_exact(q), q) < 1e-9);
    for (double c : {1e-6, 0.3, 5.0, 1e6}) CHECK(max_abs_difference(orthogonalize_exact(c * g), q) < 1e-9);
  }
}

TEST_CASE("steepest descent optimality under the operator-norm constraint") {
  std::mt19937_64 gen(29);
  const double eta = 0.37;
  const Matrix g = random_matrix(gen, 6, 4);
  const double nuc = nuclear_norm(g);
  CHECK(std::abs(inner(g, -eta * orthogonalize_exact(g)) + eta * nuc) < 1e-9);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix dw = random_matrix(gen, 6, 4);
    dw *= eta / operator_norm(dw);
    CHECK(inner(g, dw) >= -eta * nuc - 1e-9);
  }
}

TEST_CASE("newton-schulz rejects the zero matrix") {
  CHECK_THROWS_AS(newton_schulz_orthogonalize(Matrix(3, 3), 5), InvalidInput);
}

TEST_CASE("newton-schulz on a 1x1 matrix follows the scalar polynomial") {
  const NewtonSchulzCoefficients c;
  double x = 1.0;  // Frobenius normalization maps any positive scalar to 1
  for (int i = 0; i < 5; ++i) x = c.a * x + c.b * x * x * x + c.c * x * x * x * x * x;
  const Matrix out = newton_schulz_orthogonalize(Matrix{{4.2}}, 5);
  CHECK(out(0, 0) == doctest::Approx(x).epsilon(1e-14));
}

namespace {

double scalar_ns(double x, int iterations) {
  const NewtonSchulzCoefficients c;
  for (int i = 0; i < iterations; ++i) x = c.a * x + c.b * x * x * x + c.c * x * x * x * x * x;
  return x;
}

}  // namespace

TEST_CASE("newton-schulz acts on each normalized singular value as the scalar polynomial") {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix g = random_matrix(gen, 16, 16);
    const double fro = frobenius_norm(g);
    const auto in = testutil::oracle_singular_values(g);
    const auto out = testutil::oracle_singular_values(newton_schulz_orthogonalize(g, 5));
    Vector expected;
    for (double s : in) expected.push_back(scalar_ns(s / fro, 5));
    std::sort(expected.begin(), expected.end(), std::greater<>());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - expected[i]) < 1e-7);
  }
}

// Five iterations only lift normalized singular values above about 1.5e-3 into
// [0.65, 1.35]. Square Gaussian matrices often have smaller ones, so the
// bracket is asserted on the upper end always and on the lower end for
// directions above that threshold.
TEST_CASE("newton-schulz output singular values lie in the frozen bracket") {
  double threshold = 1e-6;
  while (scalar_ns(threshold, 5) < 0.65) threshold *= 1.01;
  CHECK(threshold < 2e-3);
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix g = random_matrix(gen, 16, 16);
    const double fro = frobenius_norm(g);
    const auto in = testutil::oracle_singular_values(g);
    const auto out = testutil::oracle_singular_values(newton_schulz_orthogonalize(g, 5));
    CHECK(out.front() <= 1.35);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (in[i] / fro >= threshold) CHECK(out[i] >= 0.65);
  }
  for (int trial = 0; trial < 100; ++trial) {
    // Wide Gaussian matrices are well conditioned: every direction lands inside.
    const auto out = testutil::oracle_singular_values(newton_schulz_orthogonalize(random_matrix(gen, 8, 16), 5));
    CHECK(out.front() <= 1.35);
    CHECK(out.back() >= 0.65);
  }
}

TEST_CASE("newton-schulz handles tall inputs through the wide orientation") {
  std::mt19937_64 gen(37);
  const Matrix g = random_matrix(gen, 20, 6);
  const Matrix q = newton_schulz_orthogonalize(g, 5);
  CHECK(q.same_shape(g));
  const auto s = testutil::oracle_singular_values(q);
  for (double x : s) {
    CHECK(x > 0.6);
    CHECK(x < 1.4);
  }
}

TEST_CASE("norms") {
  const Matrix d{{3, 0}, {0, 2}};
  CHECK(operator_norm(d) == doctest::Approx(3.0));
  CHECK(frobenius_norm(d) == doctest::Approx(std::sqrt(13.0)));
  CHECK(nuclear_norm(d) == doctest::Approx(5.0));
  CHECK(operator_norm(Matrix(3, 2)) == 0.0);
  CHECK(frobenius_norm(Matrix(3, 2)) == 0.0);
  CHECK(nuclear_norm(Matrix(3, 2)) == 0.0);

  std::mt19937_64 gen(41);
  const Matrix a = random_matrix(gen, 9, 5);
  double sum_sq = 0.0;
  for (double s : testutil::oracle_singular_values(a)) sum_sq += s * s;
  CHECK(frobenius_norm(a) * frobenius_norm(a) == doctest::Approx(sum_sq).epsilon(1e-12));
}

TEST_CASE("effective rank") {
  const auto eye = effective_rank(Matrix::identity(4), 0.01);
  CHECK(eye.threshold_rank == 4);
  CHECK(eye.entropy_rank == doctest::Approx(4.0).epsilon(1e-12));

  Vector diag(64, 1e-6);
  for (int i = 0; i < 4; ++i) diag[i] = 1.0;
  const auto gap = effective_rank(Matrix::diagonal(diag), 0.01);
  CHECK(gap.threshold_rank == 4);
  CHECK(gap.entropy_rank > 4.0);
  CHECK(gap.entropy_rank < 4.01);

  CHECK_THROWS_AS(effective_rank(Matrix(3, 3)), InvalidInput);
}

TEST_CASE("orthonormalize_columns gives an orthonormal basis of the same span") {
  std::mt19937_64 gen(43);
  const Matrix a = random_matrix(gen, 10, 4);
  const Matrix q = orthonormalize_columns(a);
  CHECK(orthonormality_error(q) < 1e-13);
  // a = q (qᵀ a)
  CHECK(max_abs_difference(q * transpose_multiply(q, a), a) < 1e-12);
}

TEST_CASE("matrix text format round-trips exactly") {
  std::mt19937_64 gen(47);
  const Matrix a = random_matrix(gen, 3, 5);
  std::stringstream ss;
  write_matrix(ss, a);
  CHECK(read_matrix(ss) == a);
  std::stringstream bad("2 2\n1 2\n3 nan\n");
  CHECK_THROWS_AS(read_matrix(bad), InvalidInput);
}
