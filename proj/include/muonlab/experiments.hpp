#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "muonlab/config.hpp"
#include "muonlab/linalg.hpp"
#include "muonlab/models.hpp"

namespace muonlab {

struct TrajectoryRecord {
  std::size_t step = 0;
  double time = 0.0;  ///< step × η
  double loss = 0.0;
  Vector product_singular_values;  ///< descending, zero-padded to a fixed width
  std::vector<std::array<double, 2>> alignment;  ///< (u_i·r_1, u_i·r_2) per hidden row; may be empty
  double balancedness_gap = 0.0;
};

struct RunResult {
  std::string fingerprint;
  std::vector<TrajectoryRecord> trajectory;
  std::map<std::string, double> metrics;
  double wall_time = 0.0;  ///< seconds
  bool failed = false;
  std::string failure;
};

/// Dense per-step σ_k(t) curves kept alongside the logged trajectory; the
/// tracking metrics need every step, not one record per logging interval.
struct DynamicsTrace {
  std::vector<double> times;
  std::vector<double> losses;
  std::vector<Vector> sigmas;   ///< sigmas[k][i] is σ_k at times[i]
  Vector reference_spectrum;    ///< s_k the modes converge to
};

struct DynamicsResult {
  RunResult run;
  DynamicsTrace trace;
  DeepLinearNet net;
};

/// Trains a deep linear net with population or full-batch gradients (GD or
/// any spectral optimizer). Metrics: per-mode tracking error against the
/// matching oracle, 90% / 99% crossing times, plateau count, final loss.
DynamicsResult run_dynamics(const ExperimentConfig& config);

struct OscillationPoint {
  double learning_rate = 0.0;
  bool momentum = false;
  double amplitude = 0.0;  ///< max |σ₂ − s₂| over the second half of the run
  bool failed = false;
  std::vector<TrajectoryRecord> trajectory;
};

struct OscillationResult {
  RunResult run;
  double reference_s2 = 0.0;
  std::vector<OscillationPoint> points;
};

/// Post-saturation oscillation of σ₂ around s₂ on a sample-mode regression
/// set, for every η in the grid, with and without momentum.
OscillationResult run_oscillation(const ExperimentConfig& config);

struct PairStats {
  std::size_t in_src = 0;
  std::size_t out_src = 0;
  bool trained = false;
  double mse = 0.0;       ///< mean squared error per output coordinate over all numbers
  double accuracy = 0.0;  ///< fraction of numbers whose output is nearest to the right target
};

struct RoutingResult {
  RunResult run;
  std::vector<PairStats> generalization;  ///< m × m, row-major by (in, out)
  EffectiveRank hidden_rank;
  RoutingNet net;
};

/// Full training objective of the routing task over every trained pair and
/// every number (mean of ½‖ŷ − y‖²).
double routing_training_loss(const RoutingNet& net, const std::vector<Matrix>& encodings,
                             const std::vector<Vector>& targets, std::size_t shifts);

std::vector<PairStats> routing_generalization(const RoutingNet& net, const std::vector<Matrix>& encodings,
                                              const std::vector<Vector>& targets, std::size_t shifts);

/// Trains the routing net on Algorithm-1 batches until the training loss is
/// below the tolerance or the step budget runs out.
RoutingResult run_routing(const ExperimentConfig& config);

struct SpuriousPoint {
  OptimizerKind optimizer = OptimizerKind::GD;
  double strength = 0.0;
  std::size_t replicate = 0;
  double peak_without_loss = 0.0;      ///< min over evaluations
  double peak_without_accuracy = 0.0;  ///< max over evaluations
  std::size_t separation_step = 0;     ///< steps + 1 when the curves never separate
  bool failed = false;
};

struct SpuriousEvalRecord {
  OptimizerKind optimizer = OptimizerKind::GD;
  double strength = 0.0;
  std::size_t replicate = 0;
  std::size_t step = 0;
  double loss_with = 0.0;
  double loss_without = 0.0;
  double accuracy_without = 0.0;
};

struct SpuriousSweepResult {
  RunResult run;
  std::vector<SpuriousPoint> points;
  std::vector<SpuriousEvalRecord> curves;
};

inline constexpr double kSeparationRatio = 0.10;
/// MomentumGD counts as worse than SpectralGD at a strength when its mean
/// peak without-spurious loss is larger by more than this relative margin.
inline constexpr double kCrossoverMargin = 0.01;

SpuriousSweepResult run_spurious_sweep(const ExperimentConfig& config);

/// (u_i·r_1, u_i·r_2) for every hidden row u_i, with r_k the right singular
/// vectors of Σ_yx.
std::vector<std::array<double, 2>> measure_alignment(const DeepLinearNet& net, const PopulationStats& stats);

// ---- analysis helpers ----------------------------------------------------

/// First time the series reaches `level`, linearly interpolated; -1 if never.
double crossing_time(std::span<const double> times, std::span<const double> values, double level);

struct PlateauOptions {
  /// A stretch is flat when −dL/dt stays below this fraction of the peak
  /// descent rate of the drop that ends it.
  double derivative_ratio = 0.75;
  double min_duration = 0.2;       ///< in time units
  double min_loss_ratio = 0.01;    ///< ignore flat stretches once L < ratio·L(0)
};

struct Plateau {
  double start = 0.0;
  double end = 0.0;
  double loss = 0.0;
};

/// Flat stretches of a loss curve, one per distinct drop. Drops are local
/// maxima of −dL/dt; two maxima count as separate drops only if the rate dips
/// below derivative_ratio × the smaller peak between them.
std::vector<Plateau> detect_plateaus(std::span<const double> times, std::span<const double> losses,
                                     const PlateauOptions& options = {});

struct ModeTracking {
  double max_relative_error = 0.0;
  double fitted = 0.0;          ///< σ₀ for GD, t₀ for the spectral flow
  std::size_t samples = 0;      ///< points inside the comparison window
};

/// Window where the oracle lies in [lo·s, hi·s].
inline constexpr double kTrackingWindowLow = 0.1;
inline constexpr double kTrackingWindowHigh = 0.99;

/// Fits σ₀ from the simulated s/2 crossing and compares against the logistic
/// over the pre-saturation window.
ModeTracking gd_tracking(std::span<const double> times, std::span<const double> sigma, double s);

/// Fits t₀ = √σ(t*) − t* at the first sample with σ ≥ 0.1·s and compares
/// against min((t + t₀)², s) over the same window.
ModeTracking spectral_tracking(std::span<const double> times, std::span<const double> sigma, double s);

/// Writes trajectory.csv, metrics.json and config.json into `dir` (atomically, file by file).
void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const RunResult& result);

std::string trajectory_csv(const std::vector<TrajectoryRecord>& trajectory);
std::string metrics_json(const RunResult& result);

}  // namespace muonlab

namespace muonlab {

/// Each writer puts config.json, trajectory.csv and the experiment's extra
/// tables into `dir`, then metrics.json last.
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const DynamicsResult& result);
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const OscillationResult& result);
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const RoutingResult& result);
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                   const SpuriousSweepResult& result);

/// Sampled oracle curves: columns t, k, sigma_gd, sigma_spectral.
std::string oracle_curves_csv(const Vector& spectrum, double init_scale, double t_max, double dt);

}  // namespace muonlab
