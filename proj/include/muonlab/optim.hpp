#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "muonlab/linalg.hpp"
#include "muonlab/matrix.hpp"

namespace muonlab {

enum class OptimizerKind { GD, MomentumGD, SpectralGD, SpectralMomentumGD, Muon, Adam };

/// Canonical config name ("gd", "momentum_gd", "spectral_gd", "spectral_momentum_gd", "muon", "adam").
std::string_view to_string(OptimizerKind kind);
/// Accepts the canonical names plus "sgd" as an alias for momentum_gd.
OptimizerKind parse_optimizer_kind(std::string_view name);
bool is_spectral(OptimizerKind kind);
bool uses_momentum(OptimizerKind kind);

struct Hyperparams {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int ns_iterations = 5;
  double rank_cutoff = kDefaultRankCutoff;

  /// Throws InvalidInput naming the offending field.
  void validate() const;
};

/// Update rules as an explicit state machine. Buffers are created lazily on
/// the first step and then pinned to the parameter shapes seen there.
///
///   GD                   W ← W − η∇
///   MomentumGD           g ← μg + ∇;  W ← W − ηg
///   SpectralGD           W ← W − η·orth(∇)
///   SpectralMomentumGD   g ← μg + ∇;  W ← W − η·orth(g)
///   Muon                 g ← μg + ∇;  W ← W − η·NS(g)
///   Adam                 bias-corrected first/second moments
///
/// Each matrix is orthogonalized on its own. A spectral update whose input is
/// exactly zero is skipped: the compact SVD of a zero matrix is empty.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, Hyperparams hp);

  OptimizerKind kind() const { return kind_; }
  const Hyperparams& hyperparams() const { return hp_; }
  std::size_t step_count() const { return steps_; }
  const std::vector<Matrix>& momentum_buffers() const { return momentum_; }

  void step(std::span<Matrix> params, std::span<const Matrix> grads);
  /// Convenience overload for a list of parameter pointers (model layers
  /// that are not stored contiguously).
  void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

 private:
  void ensure_buffers(std::span<Matrix* const> params);
  void update_one(std::size_t index, Matrix& param, const Matrix& grad);

  OptimizerKind kind_;
  Hyperparams hp_;
  std::size_t steps_ = 0;
  std::vector<Matrix> momentum_;
  std::vector<Matrix> second_moment_;
};

}  // namespace muonlab
