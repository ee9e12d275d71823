#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "muonlab/matrix.hpp"
#include "muonlab/models.hpp"
#include "muonlab/rng.hpp"

namespace muonlab::datagen {

/// rows × cols matrix of i.i.d. N(0, scale²) entries.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);

/// Haar-distributed n × n orthogonal matrix (QR of a Gaussian matrix with sign fix).
Matrix random_orthogonal(Rng& rng, std::size_t n);

struct RegressionData {
  Matrix xs;       ///< n × d_in
  Matrix ys;       ///< n × d_out
  Matrix teacher;  ///< A = Q diag(spectrum) Rᵀ
  PopulationStats population;  ///< Σ_xx = I, Σ_yx = A
};

/// x ~ N(0, I), y = A x + noise·ε. The teacher, inputs and noise come from
/// separate substreams of `rng`.
RegressionData gaussian_regression(const Rng& rng, std::size_t n, std::size_t d_in, std::size_t d_out,
                                   const Vector& teacher_spectrum, double noise);

/// Gaussian U, V with standard deviation `scale`. With `exact_balance`, the
/// factors are rebuilt from the SVD of VU = PΣQᵀ as U = ZΣ^{1/2}Qᵀ,
/// V = PΣ^{1/2}Zᵀ with Z the polar factor of UQ, so VᵀV = UUᵀ while VU is kept.
DeepLinearNet balanced_small_init(const Rng& rng, std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                  double scale, bool exact_balance = false);

/// Balanced initialization already aligned with the singular vectors of
/// Σ_yx: U = √σ₀ Z Rᵀ, V = √σ₀ Q Zᵀ, so every mode starts at σ_k(0) = σ₀.
DeepLinearNet aligned_small_init(const Rng& rng, const Matrix& sigma_yx, std::size_t hidden, double sigma0);

/// One dim × N matrix per source whose columns are orthonormal.
std::vector<Matrix> make_source_encodings(const Rng& rng, std::size_t sources, std::size_t numbers,
                                          std::size_t dim = 4);

/// Default target vectors (N = 4, dimension 7).
std::vector<Vector> default_routing_targets();

/// One batch of the routing task: for every input source j and shift s < k,
/// output source o = (j + s) mod m and a uniformly drawn number i, with
/// x = v_i^j and y = target_i. Advances `rng`.
RoutingBatch routing_sample_batch(Rng& rng, std::size_t sources, std::size_t shifts, std::size_t numbers,
                                  const std::vector<Matrix>& encodings, const std::vector<Vector>& targets);

/// True when (in, out) is one of the trained pairs o ∈ {j, …, j+k−1} mod m.
bool is_trained_pair(std::size_t in_src, std::size_t out_src, std::size_t sources, std::size_t shifts);

struct SpuriousSpec {
  double core_strength = 1.0;
  double spurious_strength = 1.0;
  double noise_level = 0.0;
  std::size_t d_in = 4;
  std::size_t d_out = 2;

  void validate() const;
};

/// Training set plus two evaluation sets sharing inputs and labels; the
/// without-spurious set has the last input coordinate zeroed.
struct SpuriousData {
  Matrix xs;
  Matrix ys;
  Matrix eval_xs_with;
  Matrix eval_xs_without;
  Matrix eval_ys;
  Matrix teacher;      ///< Σ_yx of the generating process
  Vector core_output;  ///< output direction of the core mode
};

/// Core inputs x_c ~ N(0, I) on coordinates 0..d_in−2 and a latent ζ ~ N(0,1)
/// shown as the last coordinate with intensity `spurious_strength`. Targets
/// y = core·q_c (r_cᵀx_c) + q_s ζ + noise, so Σ_yx = core·q_c r_cᵀ + spur·q_s e_lastᵀ.
SpuriousData spurious_dataset(const Rng& rng, const SpuriousSpec& spec, std::size_t n, std::size_t n_eval);

/// CSV exports: header row, one sample per line.
void write_regression_csv(const std::filesystem::path& path, const Matrix& xs, const Matrix& ys);
void write_routing_csv(const std::filesystem::path& path, const RoutingBatch& batch);

}  // namespace muonlab::datagen
