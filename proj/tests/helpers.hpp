#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "muonlab/matrix.hpp"

namespace testutil {

using muonlab::Matrix;
using muonlab::Vector;

/// Gaussian matrix from the standard library generator, independent of the
/// project's own RNG.
inline Matrix random_matrix(std::mt19937_64& gen, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = nd(gen);
  return m;
}

inline Eigen::MatrixXd to_eigen(const Matrix& a) {
  Eigen::MatrixXd e(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) e(i, j) = a(i, j);
  return e;
}

/// Singular values from the eigenvalues of the smaller Gram matrix, descending.
inline Vector oracle_singular_values(const Matrix& a) {
  const Eigen::MatrixXd e = to_eigen(a);
  const Eigen::MatrixXd gram = a.rows() >= a.cols() ? Eigen::MatrixXd(e.transpose() * e) : Eigen::MatrixXd(e * e.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  Vector s;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) s.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i))));
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace testutil
