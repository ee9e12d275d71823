#pragma once

#include <cstddef>

#include "muonlab/matrix.hpp"

namespace muonlab {

/// Default relative cutoff below which singular values are treated as zero.
inline constexpr double kDefaultRankCutoff = 1e-12;

/// Compact SVD a = u · diag(s) · vt keeping only singular values above the cutoff.
struct SvdResult {
  Matrix u;   ///< m × r, orthonormal columns
  Vector s;   ///< r values, non-increasing
  Matrix vt;  ///< r × n, orthonormal rows

  std::size_t rank() const { return s.size(); }
  Matrix reconstruct() const;
};

/// One-sided Jacobi sweep limits.
inline constexpr double kJacobiTolerance = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;

/// Compact SVD by one-sided (Hestenes) Jacobi with a fixed cyclic pair order.
///
/// Singular values `<= rank_cutoff * max(s)` are dropped; a cutoff of zero
/// still discards values that are zero to working precision. Each left
/// singular vector is signed so its first nonzero entry is positive, which
/// makes the factorization reproducible for a given input.
SvdResult svd_compact(const Matrix& a, double rank_cutoff = kDefaultRankCutoff);

/// Singular values only, descending (includes nothing below the cutoff).
Vector singular_values(const Matrix& a, double rank_cutoff = kDefaultRankCutoff);

/// u · vt of the compact SVD: every nonzero singular value replaced by 1.
Matrix orthogonalize_exact(const Matrix& g, double rank_cutoff = kDefaultRankCutoff);

/// Quintic Newton-Schulz polynomial coefficients.
struct NewtonSchulzCoefficients {
  double a = 3.4445;
  double b = -4.7750;
  double c = 2.0315;
};

/// Approximate orthogonalization: Frobenius-normalize, then iterate
/// X ← aX + b(XXᵀ)X + c(XXᵀ)²X. The iteration runs on the wide orientation so
/// the Gram matrix is the smaller one.
Matrix newton_schulz_orthogonalize(const Matrix& g, int iterations,
                                   const NewtonSchulzCoefficients& coeffs = {});

double operator_norm(const Matrix& a);
double frobenius_norm(const Matrix& a);
double nuclear_norm(const Matrix& a);

struct EffectiveRank {
  std::size_t threshold_rank = 0;  ///< count of s_i >= ratio * s_max
  double entropy_rank = 0.0;       ///< exp of the Shannon entropy of s / Σs
};

inline constexpr double kDefaultRankRatio = 0.01;

EffectiveRank effective_rank(const Matrix& a, double threshold_ratio = kDefaultRankRatio);

/// Orthonormalizes the columns of `a` (modified Gram-Schmidt, two passes).
/// Requires full column rank.
Matrix orthonormalize_columns(const Matrix& a);

}  // namespace muonlab
