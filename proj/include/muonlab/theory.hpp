#pragma once

#include <cstddef>
#include <vector>

#include "muonlab/matrix.hpp"

namespace muonlab::theory {

/// Teacher singular values s_1 ≥ … ≥ s_D and the shared initial mode strength σ₀.
struct SpectrumSpec {
  Vector singular_values;
  double init_scale = 1e-2;

  void validate() const;
  std::size_t size() const { return singular_values.size(); }
};

/// Logistic solution of σ̇ = 2σ(s − σ):  σ(t) = s / (1 + (s/σ₀ − 1)e^{−2st}).
double gd_sigma_trajectory(const SpectrumSpec& spec, std::size_t k, double t);

/// Same closed form with an explicit per-mode initial value.
double logistic_sigma(double s, double sigma0, double t);

inline constexpr double kDefaultLearnFraction = 0.99;

/// Time at which the logistic trajectory reaches `fraction · s_k`; zero when σ₀ already does.
double gd_learn_time(const SpectrumSpec& spec, std::size_t k, double fraction = kDefaultLearnFraction);

/// Zero-initialization spectral flow: σ_k(t) = min((t + t₀)², s_k).
double spectral_sigma_trajectory(const SpectrumSpec& spec, std::size_t k, double t, double t_offset = 0.0);

/// √s_k − t₀, clamped at zero.
double spectral_learn_time(const SpectrumSpec& spec, std::size_t k, double t_offset = 0.0);

struct SpectralPhase {
  std::size_t active_count = 0;       ///< modes still growing
  std::vector<std::size_t> active;    ///< their indices
  double entry_time = 0.0;
  double exit_time = 0.0;
};

/// Phases of the spectral flow in time order. During each phase the active
/// modes grow together while the saturated ones hold; the smallest remaining
/// singular value (with all its ties) saturates at the phase exit.
std::vector<SpectralPhase> spectral_phase_schedule(const SpectrumSpec& spec);

struct ModeEscape {
  std::size_t mode = 0;
  double time = 0.0;
};

/// Per-mode learn times for gradient flow, sorted by time (ties keep mode order).
std::vector<ModeEscape> gd_phase_schedule(const SpectrumSpec& spec, double fraction = kDefaultLearnFraction);

/// Rank-r critical point Σ_{k<r} s_k q_k r_kᵀ of the gradient flow, from the factors of Σ_yx.
Matrix gd_saddle_point(const Matrix& sigma_yx, std::size_t r);

/// Coupled mode strengths of a gated pathway:
///   dB1/dt = (√P/M²)·B2·B1·[S − B2·B1²·D]
///   dB2/dt = (P/M²)·B1²·[S − B2·B1²·D]
struct GatingParams {
  double pathways = 1.0;  ///< P
  double sources = 1.0;   ///< M
  double s_stat = 1.0;    ///< S
  double d_stat = 1.0;    ///< D
  double b1_0 = 1e-3;
  double b2_0 = 1e-3;

  void validate() const;
  double equilibrium() const { return s_stat / d_stat; }
};

struct GatingState {
  double t = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double product() const { return b2 * b1 * b1; }
};

/// Time derivatives (dB1/dt, dB2/dt) at a state.
std::pair<double, double> gating_derivatives(const GatingParams& p, double b1, double b2);

inline constexpr double kGatingEquilibriumTolerance = 1e-9;

/// Fixed-step RK4 from (b1_0, b2_0). Stops at t_max or once B2·B1² is within
/// 1e-9 of S/D. Throws NumericalError if the state becomes non-finite.
std::vector<GatingState> gating_race_integrate(const GatingParams& params, double dt, double t_max);

/// First time (linearly interpolated) at which B2·B1² reaches fraction·S/D; negative if never.
double gating_time_to_fraction(const std::vector<GatingState>& trajectory, const GatingParams& params,
                               double fraction);

}  // namespace muonlab::theory
