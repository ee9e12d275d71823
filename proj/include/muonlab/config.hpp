#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "muonlab/matrix.hpp"
#include "muonlab/optim.hpp"

namespace muonlab {

enum class ExperimentKind { Dynamics, Oscillation, Routing, SpuriousSweep, Oracle, Orthogonalize };
enum class DataMode { Population, Sample };
enum class InitMode { Gaussian, Balanced, Aligned };

std::string_view to_string(ExperimentKind kind);
std::string_view to_string(DataMode mode);
std::string_view to_string(InitMode mode);
ExperimentKind parse_experiment_kind(std::string_view name);
DataMode parse_data_mode(std::string_view name);
InitMode parse_init_mode(std::string_view name);

/// Deep linear net shape and initialization. A zero d_in / d_out means
/// "match the spectrum length" and is resolved during parsing.
struct DeepLinearSpec {
  std::size_t d_in = 0;
  std::size_t hidden = 4;
  std::size_t d_out = 0;
  InitMode init = InitMode::Gaussian;
  /// Entry standard deviation for gaussian/balanced init; σ₀ itself for aligned init.
  double init_scale = 1e-2;
  bool record_alignment = true;

  bool operator==(const DeepLinearSpec&) const = default;
};

struct DataSpec {
  Vector spectrum{2.0, 1.0};
  DataMode mode = DataMode::Population;
  std::size_t n = 512;
  double noise = 0.0;

  bool operator==(const DataSpec&) const = default;
};

struct OscillationSpec {
  std::vector<double> learning_rates{1e-3, 3e-3, 1e-2, 3e-2};
  double horizon = 6.0;  ///< training time T; each run takes T/η steps
  bool compare_momentum = true;

  bool operator==(const OscillationSpec&) const = default;
};

struct RoutingSpec {
  std::size_t sources = 7;
  std::size_t shifts = 2;
  std::size_t numbers = 4;
  std::size_t input_dim = 4;
  std::size_t hidden = 64;
  std::size_t output_dim = 7;
  double init_scale = 3e-4;
  double loss_tolerance = 1e-6;

  bool operator==(const RoutingSpec&) const = default;
};

struct SpuriousSweepSpec {
  double core_strength = 1.0;
  std::vector<double> strengths{0.1, 0.3, 1.0, 3.0, 10.0};
  double noise_level = 0.0;
  std::size_t d_in = 4;
  std::size_t hidden = 8;
  std::size_t d_out = 2;
  double init_scale = 1e-2;
  std::size_t n_train = 512;
  std::size_t n_eval = 512;
  std::size_t eval_every = 10;
  std::size_t replicates = 1;
  std::vector<OptimizerKind> optimizers{OptimizerKind::MomentumGD, OptimizerKind::SpectralGD, OptimizerKind::Muon,
                                        OptimizerKind::Adam};

  bool operator==(const SpuriousSweepSpec&) const = default;
};

struct OracleSpec {
  double t_max = 3.0;
  double dt = 0.01;

  bool operator==(const OracleSpec&) const = default;
};

struct OrthogonalizeSpec {
  std::string input;
  std::string method = "exact";  ///< "exact" or "newton_schulz"
  int iterations = 5;

  bool operator==(const OrthogonalizeSpec&) const = default;
};

/// Fully resolved description of one invocation.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Dynamics;
  OptimizerKind optimizer = OptimizerKind::GD;
  Hyperparams hp;
  std::uint64_t seed = 0;
  std::size_t steps = 20000;
  std::size_t log_every = 10;
  std::string out;

  DeepLinearSpec model;
  DataSpec data;
  OscillationSpec oscillation;
  RoutingSpec routing;
  SpuriousSweepSpec spurious;
  OracleSpec oracle;
  OrthogonalizeSpec orthogonalize;

  /// Throws InvalidInput naming the offending field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const;
};

/// Default step budget for an experiment kind.
std::size_t default_steps(ExperimentKind kind);

/// Parses JSON text, applies `overrides` ("a.b.c=value", value parsed as JSON
/// when possible and as a bare string otherwise), fills defaults and
/// validates. Unknown keys are rejected. Throws InvalidInput with the field
/// path or the parser's line/column.
ExperimentConfig parse_config(std::string_view json_text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Canonical JSON (keys sorted, every field present). parse_config of the
/// result reproduces the config exactly.
std::string serialize_config(const ExperimentConfig& config, bool include_output = true);

/// FNV-1a hash of the canonical JSON without the output directory, as 16 hex digits.
std::string config_fingerprint(const ExperimentConfig& config);

}  // namespace muonlab
