#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace muonlab {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Sized for the small problems in this project (at most a few hundred rows
/// and columns), so products are plain cache-friendly loops.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix diagonal(std::size_t rows, std::size_t cols, std::span<const double> values);
  /// Outer product a bᵀ.
  static Matrix outer(std::span<const double> a, std::span<const double> b);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  Vector column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> values);

  Matrix transpose() const;
  bool all_finite() const;
  bool is_zero() const;
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);
  /// this += scale * other
  Matrix& add_scaled(const Matrix& other, double scale);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double scale);
Matrix operator*(double scale, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

/// aᵀ b without materializing the transpose.
Matrix transpose_multiply(const Matrix& a, const Matrix& b);
/// a bᵀ without materializing the transpose.
Matrix multiply_transpose(const Matrix& a, const Matrix& b);

/// Frobenius inner product ⟨a, b⟩ = Σ a_ij b_ij.
double inner(const Matrix& a, const Matrix& b);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs_difference(const Matrix& a, const Matrix& b);

/// Throws InvalidInput naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& a, const char* what);
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

/// Plain-text format: "rows cols" header, then one whitespace-separated row
/// per line with 17 significant digits.
void write_matrix(std::ostream& out, const Matrix& a);
Matrix read_matrix(std::istream& in);
void save_matrix(const std::string& path, const Matrix& a);
Matrix load_matrix(const std::string& path);

std::ostream& operator<<(std::ostream& out, const Matrix& a);

}  // namespace muonlab
