#include "muonlab/theory.hpp"

#include <algorithm>
#include <cmath>

#include "muonlab/errors.hpp"
#include "muonlab/linalg.hpp"

namespace muonlab::theory {

void SpectrumSpec::validate() const {
  if (singular_values.empty()) throw InvalidInput("spectrum: no singular values");
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    const double s = singular_values[i];
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput("spectrum: singular values must be finite and non-negative");
    if (i > 0 && s > singular_values[i - 1]) throw InvalidInput("spectrum: singular values must be non-increasing");
  }
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) throw InvalidInput("spectrum: init_scale must be positive");
  // Small-initialization regime; σ₀ = s is allowed as the trivial fixed point.
  for (double s : singular_values)
    if (s > 0.0 && init_scale > s) throw InvalidInput("spectrum: init_scale exceeds the smallest positive singular value");
}

namespace {
double mode_value(const SpectrumSpec& spec, std::size_t k) {
  if (k >= spec.size()) throw InvalidInput("spectrum: mode index out of range");
  return spec.singular_values[k];
}
}  // namespace

double logistic_sigma(double s, double sigma0, double t) {
  if (s == 0.0 || sigma0 == 0.0) return sigma0;
  return s / (1.0 + (s / sigma0 - 1.0) * std::exp(-2.0 * s * t));
}

double gd_sigma_trajectory(const SpectrumSpec& spec, std::size_t k, double t) {
  if (t < 0.0) throw InvalidInput("gd_sigma_trajectory: negative time");
  return logistic_sigma(mode_value(spec, k), spec.init_scale, t);
}

double gd_learn_time(const SpectrumSpec& spec, std::size_t k, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInput("gd_learn_time: fraction must lie in (0, 1)");
  const double s = mode_value(spec, k);
  if (s == 0.0) throw InvalidInput("gd_learn_time: mode has zero singular value");
  const double sigma0 = spec.init_scale;
  if (sigma0 >= fraction * s) return 0.0;
  // 1 + (s/σ₀ − 1)e^{−2st} = 1/f  ⇒  t = ln((s/σ₀ − 1)·f/(1 − f)) / (2s)
  return std::log((s / sigma0 - 1.0) * fraction / (1.0 - fraction)) / (2.0 * s);
}

double spectral_sigma_trajectory(const SpectrumSpec& spec, std::size_t k, double t, double t_offset) {
  const double s = mode_value(spec, k);
  const double shifted = std::max(0.0, t + t_offset);
  return std::min(shifted * shifted, s);
}

double spectral_learn_time(const SpectrumSpec& spec, std::size_t k, double t_offset) {
  return std::max(0.0, std::sqrt(mode_value(spec, k)) - t_offset);
}

std::vector<SpectralPhase> spectral_phase_schedule(const SpectrumSpec& spec) {
  spec.validate();
  std::vector<SpectralPhase> phases;
  const auto& s = spec.singular_values;
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (s[k] > 0.0) active.push_back(k);
  double entry = 0.0;
  while (!active.empty()) {
    // Smallest active value saturates next, together with all ties.
    double level = s[active.back()];
    SpectralPhase phase;
    phase.active = active;
    phase.active_count = active.size();
    phase.entry_time = entry;
    phase.exit_time = std::sqrt(level);
    phases.push_back(phase);
    entry = phase.exit_time;
    while (!active.empty() && s[active.back()] == level) active.pop_back();
  }
  return phases;
}

std::vector<ModeEscape> gd_phase_schedule(const SpectrumSpec& spec, double fraction) {
  spec.validate();
  std::vector<ModeEscape> out;
  for (std::size_t k = 0; k < spec.size(); ++k) {
    if (spec.singular_values[k] > 0.0) out.push_back({k, gd_learn_time(spec, k, fraction)});
  }
  std::stable_sort(out.begin(), out.end(), [](const ModeEscape& a, const ModeEscape& b) { return a.time < b.time; });
  return out;
}

Matrix gd_saddle_point(const Matrix& sigma_yx, std::size_t r) {
  const SvdResult svd = svd_compact(sigma_yx);
  Matrix w(sigma_yx.rows(), sigma_yx.cols());
  for (std::size_t k = 0; k < std::min(r, svd.rank()); ++k) {
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) += svd.s[k] * svd.u(i, k) * svd.vt(k, j);
  }
  return w;
}

void GatingParams::validate() const {
  if (!(pathways > 0.0)) throw InvalidInput("gating: pathway count P must be positive");
  if (!(sources > 0.0)) throw InvalidInput("gating: source count M must be positive");
  if (pathways > sources * sources) throw InvalidInput("gating: P must not exceed M^2");
  if (!(s_stat > 0.0) || !(d_stat > 0.0)) throw InvalidInput("gating: S and D must be positive");
  if (!std::isfinite(b1_0) || !std::isfinite(b2_0)) throw InvalidInput("gating: initial strengths must be finite");
}

std::pair<double, double> gating_derivatives(const GatingParams& p, double b1, double b2) {
  const double m2 = p.sources * p.sources;
  const double bracket = p.s_stat - b2 * b1 * b1 * p.d_stat;
  return {std::sqrt(p.pathways) / m2 * b2 * b1 * bracket, p.pathways / m2 * b1 * b1 * bracket};
}

std::vector<GatingState> gating_race_integrate(const GatingParams& params, double dt, double t_max) {
  params.validate();
  if (!(dt > 0.0)) throw InvalidInput("gating: dt must be positive");
  if (!(t_max >= 0.0)) throw InvalidInput("gating: t_max must be non-negative");
  std::vector<GatingState> traj;
  GatingState st{0.0, params.b1_0, params.b2_0};
  traj.push_back(st);
  const double target = params.equilibrium();
  const auto steps = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-12));
  for (std::size_t i = 0; i < steps; ++i) {
    if (std::abs(st.product() - target) <= kGatingEquilibriumTolerance) break;
    const double h = std::min(dt, t_max - st.t);
    if (h <= 0.0) break;
    const auto [k1a, k1b] = gating_derivatives(params, st.b1, st.b2);
    const auto [k2a, k2b] = gating_derivatives(params, st.b1 + 0.5 * h * k1a, st.b2 + 0.5 * h * k1b);
    const auto [k3a, k3b] = gating_derivatives(params, st.b1 + 0.5 * h * k2a, st.b2 + 0.5 * h * k2b);
    const auto [k4a, k4b] = gating_derivatives(params, st.b1 + h * k3a, st.b2 + h * k3b);
    st.b1 += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
    st.b2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
    st.t = static_cast<double>(i + 1) * dt;
    if (!std::isfinite(st.b1) || !std::isfinite(st.b2)) {
      throw NumericalError("gating: state diverged at t=" + std::to_string(st.t));
    }
    traj.push_back(st);
  }
  return traj;
}

double gating_time_to_fraction(const std::vector<GatingState>& trajectory, const GatingParams& params,
                               double fraction) {
  const double level = fraction * params.equilibrium();
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const double p = trajectory[i].product();
    if (p >= level) {
      if (i == 0) return trajectory[0].t;
      const double p0 = trajectory[i - 1].product();
      const double w = (level - p0) / (p - p0);
      return trajectory[i - 1].t + w * (trajectory[i].t - trajectory[i - 1].t);
    }
  }
  return -1.0;
}

}  // namespace muonlab::theory
