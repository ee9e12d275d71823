#include "muonlab/optim.hpp"

#include <cmath>

#include "muonlab/errors.hpp"

namespace muonlab {

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::GD: return "gd";
    case OptimizerKind::MomentumGD: return "momentum_gd";
    case OptimizerKind::SpectralGD: return "spectral_gd";
    case OptimizerKind::SpectralMomentumGD: return "spectral_momentum_gd";
    case OptimizerKind::Muon: return "muon";
    case OptimizerKind::Adam: return "adam";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "gd") return OptimizerKind::GD;
  if (name == "momentum_gd" || name == "sgd") return OptimizerKind::MomentumGD;
  if (name == "spectral_gd") return OptimizerKind::SpectralGD;
  if (name == "spectral_momentum_gd") return OptimizerKind::SpectralMomentumGD;
  if (name == "muon") return OptimizerKind::Muon;
  if (name == "adam") return OptimizerKind::Adam;
  throw InvalidInput("unknown optimizer kind '" + std::string(name) + "'");
}

bool is_spectral(OptimizerKind kind) {
  return kind == OptimizerKind::SpectralGD || kind == OptimizerKind::SpectralMomentumGD ||
         kind == OptimizerKind::Muon;
}

bool uses_momentum(OptimizerKind kind) {
  return kind == OptimizerKind::MomentumGD || kind == OptimizerKind::SpectralMomentumGD ||
         kind == OptimizerKind::Muon;
}

void Hyperparams::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw InvalidInput("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw InvalidInput("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw InvalidInput("adam_eps must be positive");
  if (ns_iterations < 1) throw InvalidInput("ns_iterations must be positive");
  if (!(rank_cutoff >= 0.0) || !std::isfinite(rank_cutoff)) throw InvalidInput("rank_cutoff must be non-negative");
}

Optimizer::Optimizer(OptimizerKind kind, Hyperparams hp) : kind_(kind), hp_(hp) { hp_.validate(); }

void Optimizer::step(std::span<Matrix> params, std::span<const Matrix> grads) {
  std::vector<Matrix*> ptrs;
  ptrs.reserve(params.size());
  for (auto& p : params) ptrs.push_back(&p);
  step(std::span<Matrix* const>(ptrs), grads);
}

void Optimizer::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) {
    throw InvalidInput("optimizer step: " + std::to_string(params.size()) + " parameters but " +
                       std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], grads[i], "optimizer step");
    require_finite(grads[i], "optimizer step gradient");
  }
  ensure_buffers(params);
  ++steps_;
  for (std::size_t i = 0; i < params.size(); ++i) update_one(i, *params[i], grads[i]);
}

void Optimizer::ensure_buffers(std::span<Matrix* const> params) {
  const bool need_momentum = uses_momentum(kind_) || kind_ == OptimizerKind::Adam;
  if (!need_momentum) return;
  if (momentum_.empty()) {
    for (const Matrix* p : params) momentum_.emplace_back(p->rows(), p->cols());
    if (kind_ == OptimizerKind::Adam)
      for (const Matrix* p : params) second_moment_.emplace_back(p->rows(), p->cols());
    return;
  }
  if (momentum_.size() != params.size()) throw InvalidInput("optimizer step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i)
    require_same_shape(momentum_[i], *params[i], "optimizer buffer");
}

void Optimizer::update_one(std::size_t index, Matrix& param, const Matrix& grad) {
  const double lr = hp_.learning_rate;
  switch (kind_) {
    case OptimizerKind::GD:
      param.add_scaled(grad, -lr);
      return;
    case OptimizerKind::MomentumGD: {
      Matrix& g = momentum_[index];
      g *= hp_.momentum;
      g += grad;
      param.add_scaled(g, -lr);
      return;
    }
    case OptimizerKind::SpectralGD: {
      if (grad.is_zero()) return;
      param.add_scaled(orthogonalize_exact(grad, hp_.rank_cutoff), -lr);
      return;
    }
    case OptimizerKind::SpectralMomentumGD: {
      Matrix& g = momentum_[index];
      g *= hp_.momentum;
      g += grad;
      if (g.is_zero()) return;
      param.add_scaled(orthogonalize_exact(g, hp_.rank_cutoff), -lr);
      return;
    }
    case OptimizerKind::Muon: {
      Matrix& g = momentum_[index];
      g *= hp_.momentum;
      g += grad;
      if (g.is_zero()) return;
      param.add_scaled(newton_schulz_orthogonalize(g, hp_.ns_iterations), -lr);
      return;
    }
    case OptimizerKind::Adam: {
      Matrix& m = momentum_[index];
      Matrix& v = second_moment_[index];
      const double b1 = hp_.adam_beta1;
      const double b2 = hp_.adam_beta2;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
      auto pd = param.data();
      auto md = m.data();
      auto vd = v.data();
      const auto gd = grad.data();
      for (std::size_t i = 0; i < pd.size(); ++i) {
        md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
        vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
        pd[i] -= lr * (md[i] / c1) / (std::sqrt(vd[i] / c2) + hp_.adam_eps);
      }
      return;
    }
  }
}

}  // namespace muonlab
