#include "muonlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "muonlab/errors.hpp"

namespace muonlab {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct ColumnSvd {
  std::vector<Vector> u;  // left vectors (length m), one per kept value
  Vector s;
  std::vector<Vector> v;  // right vectors (length n)
};

// Hestenes one-sided Jacobi on a tall (m >= n) matrix given as columns.
ColumnSvd jacobi_tall(std::vector<Vector> cols, std::size_t m, double rank_cutoff) {
  const std::size_t n = cols.size();
  std::vector<Vector> v(n, Vector(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  double fro2 = 0.0;
  for (const auto& c : cols) fro2 += dot(c, c);
  // Columns whose squared norm falls below this are numerically zero and are
  // left out of the rotations.
  const double negligible = fro2 * kEps * kEps;

  Vector norms2(n);
  for (std::size_t j = 0; j < n; ++j) norms2[j] = dot(cols[j], cols[j]);

  bool converged = (n < 2);
  for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = norms2[p];
        const double beta = norms2[q];
        if (alpha <= negligible || beta <= negligible) continue;
        auto& cp = cols[p];
        auto& cq = cols[q];
        const double gamma = dot(cp, cq);
        if (std::abs(gamma) <= kJacobiTolerance * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = cp[i];
          const double y = cq[i];
          cp[i] = c * x - s * y;
          cq[i] = s * x + c * y;
        }
        auto& vp = v[p];
        auto& vq = v[q];
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
        norms2[p] = dot(cp, cp);
        norms2[q] = dot(cq, cq);
      }
    }
  }
  if (!converged) throw NumericalError("svd: Jacobi iteration did not converge");

  Vector sv(n);
  for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(dot(cols[j], cols[j]));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Stable sort keeps the result a deterministic function of the input for ties.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sv[a] > sv[b]; });

  ColumnSvd out;
  const double smax = n ? sv[order[0]] : 0.0;
  if (smax == 0.0) return out;
  const double floor_rel = std::max(rank_cutoff, 4.0 * kEps * static_cast<double>(std::max(m, n)));
  const double floor = floor_rel * smax;
  for (std::size_t idx : order) {
    if (!(sv[idx] > floor)) break;
    Vector u = cols[idx];
    for (double& x : u) x /= sv[idx];
    out.u.push_back(std::move(u));
    out.s.push_back(sv[idx]);
    out.v.push_back(std::move(v[idx]));
  }
  return out;
}

}  // namespace

Matrix SvdResult::reconstruct() const {
  Matrix us = u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < s.size(); ++k) us(i, k) *= s[k];
  return us * vt;
}

SvdResult svd_compact(const Matrix& a, double rank_cutoff) {
  require_finite(a, "svd_compact");
  if (!(rank_cutoff >= 0.0) || !std::isfinite(rank_cutoff)) {
    throw InvalidInput("svd_compact: rank_cutoff must be a finite non-negative number");
  }
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  const bool tall = m >= n;
  // Work on the orientation with fewer columns: A = U S Vᵀ, or Aᵀ = V S Uᵀ.
  const std::size_t rows = tall ? m : n;
  const std::size_t cols = tall ? n : m;
  std::vector<Vector> work(cols, Vector(rows));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (tall) work[j][i] = a(i, j);
      else work[i][j] = a(i, j);
    }
  ColumnSvd cs = jacobi_tall(std::move(work), rows, rank_cutoff);
  const std::size_t r = cs.s.size();

  SvdResult out;
  out.s = cs.s;
  out.u = Matrix(m, r);
  out.vt = Matrix(r, n);
  const auto& left = tall ? cs.u : cs.v;
  const auto& right = tall ? cs.v : cs.u;
  for (std::size_t k = 0; k < r; ++k) {
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = left[k][i];
    for (std::size_t j = 0; j < n; ++j) out.vt(k, j) = right[k][j];
  }
  // Sign convention: first nonzero entry of each left vector is positive.
  for (std::size_t k = 0; k < r; ++k) {
    double lead = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::abs(out.u(i, k)) > 1e-12) {
        lead = out.u(i, k);
        break;
      }
    }
    if (lead < 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = -out.u(i, k);
      for (std::size_t j = 0; j < n; ++j) out.vt(k, j) = -out.vt(k, j);
    }
  }
  return out;
}

Vector singular_values(const Matrix& a, double rank_cutoff) { return svd_compact(a, rank_cutoff).s; }

Matrix orthogonalize_exact(const Matrix& g, double rank_cutoff) {
  const SvdResult svd = svd_compact(g, rank_cutoff);
  if (svd.rank() == 0) return Matrix(g.rows(), g.cols());
  return svd.u * svd.vt;
}

Matrix newton_schulz_orthogonalize(const Matrix& g, int iterations, const NewtonSchulzCoefficients& coeffs) {
  if (iterations < 1) throw InvalidInput("newton_schulz: iterations must be positive");
  require_finite(g, "newton_schulz");
  const double fro = frobenius_norm(g);
  if (fro == 0.0) throw InvalidInput("newton_schulz: zero matrix cannot be normalized");

  const bool transposed = g.rows() > g.cols();
  Matrix x = transposed ? g.transpose() : g;
  x *= 1.0 / fro;
  for (int it = 0; it < iterations; ++it) {
    const Matrix gram = multiply_transpose(x, x);
    Matrix poly = gram * coeffs.b;
    poly.add_scaled(gram * gram, coeffs.c);
    Matrix next = poly * x;
    next.add_scaled(x, coeffs.a);
    x = std::move(next);
    if (!x.all_finite()) throw NumericalError("newton_schulz: iteration produced non-finite values");
  }
  return transposed ? x.transpose() : x;
}

double operator_norm(const Matrix& a) {
  const Vector s = singular_values(a, 0.0);
  return s.empty() ? 0.0 : s.front();
}

double frobenius_norm(const Matrix& a) {
  require_finite(a, "frobenius_norm");
  return norm2(a.data());
}

double nuclear_norm(const Matrix& a) {
  const Vector s = singular_values(a, 0.0);
  return std::accumulate(s.begin(), s.end(), 0.0);
}

EffectiveRank effective_rank(const Matrix& a, double threshold_ratio) {
  if (!(threshold_ratio > 0.0 && threshold_ratio < 1.0)) {
    throw InvalidInput("effective_rank: threshold_ratio must lie in (0, 1)");
  }
  const Vector s = singular_values(a, 0.0);
  if (s.empty()) throw InvalidInput("effective_rank: zero matrix");
  EffectiveRank out;
  const double cut = threshold_ratio * s.front();
  out.threshold_rank = static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [cut](double v) { return v >= cut; }));
  const double total = std::accumulate(s.begin(), s.end(), 0.0);
  double entropy = 0.0;
  for (double v : s) {
    const double p = v / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  out.entropy_rank = std::exp(entropy);
  return out;
}

Matrix orthonormalize_columns(const Matrix& a) {
  Matrix q = a;
  for (std::size_t j = 0; j < q.cols(); ++j) {
    Vector v = q.column(j);
    const double original = norm2(v);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        const Vector qk = q.column(k);
        const double proj = dot(qk, v);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * qk[i];
      }
    }
    const double nv = norm2(v);
    if (!(nv > 1e-10 * std::max(original, 1e-300))) {
      throw InvalidInput("orthonormalize_columns: columns are linearly dependent");
    }
    for (double& x : v) x /= nv;
    q.set_column(j, v);
  }
  return q;
}

}  // namespace muonlab
