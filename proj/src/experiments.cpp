#include "muonlab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "muonlab/datagen.hpp"
#include "muonlab/errors.hpp"
#include "muonlab/io.hpp"
#include "muonlab/optim.hpp"
#include "muonlab/rng.hpp"
#include "muonlab/theory.hpp"

namespace muonlab {
namespace {

// Top-level substreams of the run seed.
constexpr std::uint64_t kDataStream = 100;
constexpr std::uint64_t kInitStream = 200;
constexpr std::uint64_t kBatchStream = 300;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string mode_key(const char* name, std::size_t k) { return std::string(name) + "_" + std::to_string(k + 1); }

Vector padded_singular_values(const Matrix& w, std::size_t width) {
  Vector s = singular_values(w, 0.0);
  s.resize(width, 0.0);
  return s;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Symmetric positive-definite inverse through the SVD.
Matrix spd_inverse(const Matrix& a) {
  const SvdResult svd = svd_compact(a);
  if (svd.rank() < a.rows()) throw NumericalError("sample covariance is singular; increase data.n");
  Matrix scaled = svd.vt.transpose();
  for (std::size_t i = 0; i < scaled.rows(); ++i)
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(i, j) /= svd.s[j];
  return multiply_transpose(scaled, svd.u);
}

struct DeepLinearProblem {
  PopulationStats stats;
  double loss_constant = 0.0;  ///< makes the reported loss the actual mean squared error
  Vector reference;            ///< singular values the modes converge to
};

DeepLinearProblem make_problem(const ExperimentConfig& c, const Rng& root) {
  const bool sample = c.data.mode == DataMode::Sample;
  const auto data = datagen::gaussian_regression(root.substream(kDataStream), sample ? c.data.n : 1, c.model.d_in,
                                                 c.model.d_out, c.data.spectrum, c.data.noise);
  DeepLinearProblem p;
  if (!sample) {
    p.stats = data.population;
    p.loss_constant = 0.5 * inner(data.teacher, data.teacher);
    p.reference = c.data.spectrum;
    return p;
  }
  p.stats = empirical_stats(data.xs, data.ys);
  p.loss_constant = 0.5 * inner(data.ys, data.ys) / static_cast<double>(data.ys.rows());
  const Matrix w_star = p.stats.sigma_yx * spd_inverse(p.stats.sigma_xx);
  p.reference = padded_singular_values(w_star, c.data.spectrum.size());
  return p;
}

DeepLinearNet make_deep_linear(const ExperimentConfig& c, const Rng& root, const PopulationStats& stats) {
  const Rng rng = root.substream(kInitStream);
  switch (c.model.init) {
    case InitMode::Gaussian:
      return datagen::balanced_small_init(rng, c.model.d_in, c.model.hidden, c.model.d_out, c.model.init_scale, false);
    case InitMode::Balanced:
      return datagen::balanced_small_init(rng, c.model.d_in, c.model.hidden, c.model.d_out, c.model.init_scale, true);
    case InitMode::Aligned:
      return datagen::aligned_small_init(rng, stats.sigma_yx, c.model.hidden, c.model.init_scale);
  }
  throw InvalidInput("unknown init mode");
}

}  // namespace

std::vector<std::array<double, 2>> measure_alignment(const DeepLinearNet& net, const PopulationStats& stats) {
  const SvdResult svd = svd_compact(stats.sigma_yx);
  if (svd.rank() < 2) throw InvalidInput("measure_alignment: Σ_yx needs rank at least 2");
  if (net.d_in() != svd.vt.cols()) throw InvalidInput("measure_alignment: network input size does not match Σ_yx");
  std::vector<std::array<double, 2>> out(net.hidden());
  for (std::size_t i = 0; i < net.hidden(); ++i) {
    const auto row = net.u.row(i);
    out[i] = {dot(row, svd.vt.row(0)), dot(row, svd.vt.row(1))};
  }
  return out;
}

double crossing_time(std::span<const double> times, std::span<const double> values, double level) {
  if (times.size() != values.size()) throw InvalidInput("crossing_time: length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] >= level) {
      if (i == 0) return times[0];
      const double w = (level - values[i - 1]) / (values[i] - values[i - 1]);
      return times[i - 1] + w * (times[i] - times[i - 1]);
    }
  }
  return -1.0;
}

std::vector<Plateau> detect_plateaus(std::span<const double> times, std::span<const double> losses,
                                     const PlateauOptions& opt) {
  if (times.size() != losses.size()) throw InvalidInput("detect_plateaus: length mismatch");
  const std::size_t n = losses.size();
  std::vector<Plateau> out;
  if (n < 3) return out;
  // Descent rate r = −dL/dt by central differences.
  std::vector<double> rate(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == n ? n - 1 : i + 1;
    rate[i] = -(losses[b] - losses[a]) / (times[b] - times[a]);
  }
  const double top = *std::max_element(rate.begin(), rate.end());
  if (!(top > 0.0)) return out;

  // Local maxima of the rate, merged until every pair of neighbours is
  // separated by a dip below derivative_ratio × the smaller of the two.
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (rate[i] >= rate[i - 1] && rate[i] > rate[i + 1] && rate[i] > 1e-3 * top) peaks.push_back(i);
  }
  std::vector<std::size_t> kept;
  for (std::size_t p : peaks) {
    while (!kept.empty()) {
      const std::size_t q = kept.back();
      const double dip = *std::min_element(rate.begin() + static_cast<std::ptrdiff_t>(q),
                                           rate.begin() + static_cast<std::ptrdiff_t>(p) + 1);
      if (dip < opt.derivative_ratio * std::min(rate[q], rate[p])) break;
      if (rate[p] <= rate[q]) {
        p = q;  // the new maximum is absorbed into the previous one
      }
      kept.pop_back();
    }
    kept.push_back(p);
  }

  // The plateau before each kept peak: the stretch around the deepest point
  // of the preceding dip where the rate stays below the ratio.
  const double floor = opt.min_loss_ratio * losses[0];
  std::size_t left = 0;
  for (std::size_t p : kept) {
    std::size_t v = left;
    for (std::size_t i = left; i < p; ++i)
      if (rate[i] < rate[v]) v = i;
    const double level = opt.derivative_ratio * rate[p];
    if (rate[v] < level && losses[v] > floor) {
      std::size_t a = v, b = v;
      while (a > left && rate[a - 1] < level) --a;
      while (b + 1 < p && rate[b + 1] < level) ++b;
      if (times[b] - times[a] >= opt.min_duration) out.push_back({times[a], times[b], losses[v]});
    }
    left = p;
  }
  return out;
}

ModeTracking gd_tracking(std::span<const double> times, std::span<const double> sigma, double s) {
  ModeTracking m;
  m.max_relative_error = std::numeric_limits<double>::infinity();
  const double t_half = crossing_time(times, sigma, 0.5 * s);
  if (t_half < 0.0) return m;
  m.fitted = s / (1.0 + std::exp(2.0 * s * t_half));
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double oracle = theory::logistic_sigma(s, m.fitted, times[i]);
    if (oracle < kTrackingWindowLow * s || oracle > kTrackingWindowHigh * s) continue;
    worst = std::max(worst, std::abs(sigma[i] - oracle) / oracle);
    ++m.samples;
  }
  if (m.samples > 0) m.max_relative_error = worst;
  return m;
}

ModeTracking spectral_tracking(std::span<const double> times, std::span<const double> sigma, double s) {
  ModeTracking m;
  m.max_relative_error = std::numeric_limits<double>::infinity();
  std::size_t anchor = times.size();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (sigma[i] >= kTrackingWindowLow * s) {
      anchor = i;
      break;
    }
  }
  if (anchor == times.size()) return m;
  m.fitted = std::sqrt(sigma[anchor]) - times[anchor];
  const theory::SpectrumSpec spec{{s}, 1.0};
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double oracle = theory::spectral_sigma_trajectory(spec, 0, times[i], m.fitted);
    if (oracle < kTrackingWindowLow * s || oracle > kTrackingWindowHigh * s) continue;
    worst = std::max(worst, std::abs(sigma[i] - oracle) / oracle);
    ++m.samples;
  }
  if (m.samples > 0) m.max_relative_error = worst;
  return m;
}

DynamicsResult run_dynamics(const ExperimentConfig& c) {
  c.validate();
  const Stopwatch clock;
  const Rng root(c.seed);
  const DeepLinearProblem problem = make_problem(c, root);
  DynamicsResult result{{}, {}, make_deep_linear(c, root, problem.stats)};
  RunResult& run = result.run;
  run.fingerprint = config_fingerprint(c);
  DynamicsTrace& trace = result.trace;
  trace.reference_spectrum = problem.reference;
  const std::size_t modes = problem.reference.size();
  trace.sigmas.assign(modes, {});
  const std::size_t width = std::min({c.model.d_in, c.model.d_out, c.model.hidden});
  const bool align = c.model.record_alignment && c.data.spectrum.size() >= 2;

  Optimizer opt(c.optimizer, c.hp);
  DeepLinearNet& net = result.net;
  std::array<Matrix*, 2> params{&net.u, &net.v};
  const double eta = c.hp.learning_rate;

  for (std::size_t step = 0; step <= c.steps; ++step) {
    const DlnGradients g = dln_population_grads(net, problem.stats);
    const double loss = g.loss + problem.loss_constant;
    const Vector sv = padded_singular_values(product_map(net), width);
    if (!std::isfinite(loss) || !all_finite(sv) || !g.grad_u.all_finite() || !g.grad_v.all_finite()) {
      run.failed = true;
      run.failure = "non-finite state at step " + std::to_string(step);
      break;
    }
    const double t = static_cast<double>(step) * eta;
    trace.times.push_back(t);
    trace.losses.push_back(loss);
    for (std::size_t k = 0; k < modes; ++k) trace.sigmas[k].push_back(k < sv.size() ? sv[k] : 0.0);
    if (step % c.log_every == 0 || step == c.steps) {
      TrajectoryRecord rec{step, t, loss, sv, {}, balancedness_gap(net)};
      if (align) rec.alignment = measure_alignment(net, problem.stats);
      run.trajectory.push_back(std::move(rec));
    }
    if (step == c.steps) break;
    const std::array<Matrix, 2> grads{g.grad_u, g.grad_v};
    opt.step(std::span<Matrix* const>(params), std::span<const Matrix>(grads));
  }

  auto& m = run.metrics;
  m["steps_run"] = trace.times.empty() ? 0.0 : trace.times.back() / eta;
  m["final_loss"] = trace.losses.empty() ? kNaN : trace.losses.back();
  m["final_balancedness_gap"] = balancedness_gap(net);
  m["plateau_count"] = static_cast<double>(detect_plateaus(trace.times, trace.losses).size());
  const bool gd_flow = c.optimizer == OptimizerKind::GD;
  const bool spectral_flow = c.optimizer == OptimizerKind::SpectralGD;
  double worst = 0.0;
  for (std::size_t k = 0; k < modes; ++k) {
    const double s = problem.reference[k];
    m[mode_key("reference_sigma", k)] = s;
    m[mode_key("final_sigma", k)] = trace.sigmas[k].empty() ? kNaN : trace.sigmas[k].back();
    m[mode_key("cross90_time", k)] = crossing_time(trace.times, trace.sigmas[k], 0.9 * s);
    m[mode_key("cross99_time", k)] = crossing_time(trace.times, trace.sigmas[k], 0.99 * s);
    if (gd_flow || spectral_flow) {
      const ModeTracking tr = gd_flow ? gd_tracking(trace.times, trace.sigmas[k], s)
                                      : spectral_tracking(trace.times, trace.sigmas[k], s);
      m[mode_key("tracking_error", k)] = tr.max_relative_error;
      m[mode_key(gd_flow ? "fitted_sigma0" : "fitted_offset", k)] = tr.fitted;
      worst = std::max(worst, tr.max_relative_error);
    }
  }
  if (gd_flow || spectral_flow) m["tracking_error_max"] = worst;
  m["failed"] = run.failed ? 1.0 : 0.0;
  run.wall_time = clock.seconds();
  return result;
}

OscillationResult run_oscillation(const ExperimentConfig& c) {
  c.validate();
  if (c.data.spectrum.size() < 2) throw InvalidInput("data.spectrum: oscillation needs at least two singular values");
  if (!is_spectral(c.optimizer) || c.optimizer == OptimizerKind::Muon) {
    throw InvalidInput("optimizer.kind: oscillation runs use spectral_gd or spectral_momentum_gd");
  }
  const Stopwatch clock;
  const Rng root(c.seed);
  const DeepLinearProblem problem = make_problem(c, root);
  const DeepLinearNet init = make_deep_linear(c, root, problem.stats);
  OscillationResult out;
  out.run.fingerprint = config_fingerprint(c);
  out.reference_s2 = problem.reference[1];
  const std::size_t width = std::min({c.model.d_in, c.model.d_out, c.model.hidden});

  std::vector<OptimizerKind> kinds{c.optimizer};
  if (c.oscillation.compare_momentum) kinds = {OptimizerKind::SpectralGD, OptimizerKind::SpectralMomentumGD};

  for (double lr : c.oscillation.learning_rates) {
    for (OptimizerKind kind : kinds) {
      Hyperparams hp = c.hp;
      hp.learning_rate = lr;
      Optimizer opt(kind, hp);
      DeepLinearNet net = init;
      std::array<Matrix*, 2> params{&net.u, &net.v};
      const auto steps = static_cast<std::size_t>(std::ceil(c.oscillation.horizon / lr));
      OscillationPoint point{lr, uses_momentum(kind), 0.0, false, {}};
      for (std::size_t step = 0; step <= steps; ++step) {
        const DlnGradients g = dln_population_grads(net, problem.stats);
        const Vector sv = padded_singular_values(product_map(net), width);
        if (!all_finite(sv) || !std::isfinite(g.loss)) {
          point.failed = true;
          break;
        }
        if (2 * step >= steps) point.amplitude = std::max(point.amplitude, std::abs(sv[1] - out.reference_s2));
        if (step % c.log_every == 0 || step == steps) {
          point.trajectory.push_back({step, static_cast<double>(step) * lr, g.loss + problem.loss_constant, sv, {},
                                      balancedness_gap(net)});
        }
        if (step == steps) break;
        const std::array<Matrix, 2> grads{g.grad_u, g.grad_v};
        opt.step(std::span<Matrix* const>(params), std::span<const Matrix>(grads));
      }
      out.points.push_back(point);
      const std::string key = "amplitude/lr=" + io::format_double(lr) + (point.momentum ? "/momentum" : "/plain");
      out.run.metrics[key] = point.failed ? kNaN : point.amplitude;
      if (point.failed) out.run.failed = true;
    }
  }
  out.run.metrics["reference_s2"] = out.reference_s2;
  if (out.run.failed) out.run.failure = "at least one grid point diverged";
  out.run.wall_time = clock.seconds();
  return out;
}

double routing_training_loss(const RoutingNet& net, const std::vector<Matrix>& encodings,
                             const std::vector<Vector>& targets, std::size_t shifts) {
  const std::size_t m = net.sources();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t s = 0; s < shifts; ++s) {
      const std::size_t o = (j + s) % m;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const Vector y = routing_forward(net, encodings[j].column(i), j, o);
        double r2 = 0.0;
        for (std::size_t q = 0; q < y.size(); ++q) r2 += (y[q] - targets[i][q]) * (y[q] - targets[i][q]);
        total += 0.5 * r2;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

std::vector<PairStats> routing_generalization(const RoutingNet& net, const std::vector<Matrix>& encodings,
                                              const std::vector<Vector>& targets, std::size_t shifts) {
  const std::size_t m = net.sources();
  std::vector<PairStats> out;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t o = 0; o < m; ++o) {
      PairStats p{j, o, datagen::is_trained_pair(j, o, m, shifts), 0.0, 0.0};
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const Vector y = routing_forward(net, encodings[j].column(i), j, o);
        std::size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < targets.size(); ++c) {
          double d2 = 0.0;
          for (std::size_t q = 0; q < y.size(); ++q) d2 += (y[q] - targets[c][q]) * (y[q] - targets[c][q]);
          if (c == i) p.mse += d2 / static_cast<double>(y.size());
          if (d2 < best) {
            best = d2;
            nearest = c;
          }
        }
        if (nearest == i) p.accuracy += 1.0;
      }
      p.mse /= static_cast<double>(targets.size());
      p.accuracy /= static_cast<double>(targets.size());
      out.push_back(p);
    }
  }
  return out;
}

RoutingResult run_routing(const ExperimentConfig& c) {
  c.validate();
  const Stopwatch clock;
  const RoutingSpec& spec = c.routing;
  const Rng root(c.seed);
  const auto encodings = datagen::make_source_encodings(root.substream(kDataStream), spec.sources, spec.numbers,
                                                        spec.input_dim);
  auto targets = datagen::default_routing_targets();
  targets.resize(spec.numbers);

  RoutingResult result;
  RoutingNet& net = result.net;
  {
    const Rng init = root.substream(kInitStream);
    for (std::size_t j = 0; j < spec.sources; ++j) {
      Rng e = init.substream(1000 + j);
      Rng d = init.substream(2000 + j);
      net.encoders.push_back(datagen::gaussian_matrix(e, spec.hidden, spec.input_dim, spec.init_scale));
      net.decoders.push_back(datagen::gaussian_matrix(d, spec.output_dim, spec.hidden, spec.init_scale));
    }
    Rng h = init.substream(3000);
    net.hidden = datagen::gaussian_matrix(h, spec.hidden, spec.hidden, spec.init_scale);
  }
  RunResult& run = result.run;
  run.fingerprint = config_fingerprint(c);

  Optimizer opt(c.optimizer, c.hp);
  Rng batch_rng = root.substream(kBatchStream);
  const std::vector<Matrix*> params = net.parameters();
  double train_loss = kNaN;
  std::size_t step = 0;
  for (;; ++step) {
    const bool log_now = step % c.log_every == 0 || step == c.steps;
    if (log_now) {
      train_loss = routing_training_loss(net, encodings, targets, spec.shifts);
      if (!std::isfinite(train_loss)) {
        run.failed = true;
        run.failure = "non-finite training loss at step " + std::to_string(step);
        break;
      }
      run.trajectory.push_back({step, static_cast<double>(step) * c.hp.learning_rate, train_loss,
                                singular_values(net.hidden, 0.0), {}, 0.0});
      run.trajectory.back().product_singular_values.resize(spec.hidden, 0.0);
      if (train_loss < spec.loss_tolerance || step == c.steps) break;
    }
    const RoutingBatch batch =
        datagen::routing_sample_batch(batch_rng, spec.sources, spec.shifts, spec.numbers, encodings, targets);
    const RoutingGradients g = routing_batch_grads(net, batch);
    if (!std::isfinite(g.loss)) {
      run.failed = true;
      run.failure = "non-finite batch loss at step " + std::to_string(step);
      break;
    }
    const std::vector<Matrix> grads = g.flatten();
    opt.step(std::span<Matrix* const>(params), std::span<const Matrix>(grads));
  }

  result.generalization = routing_generalization(net, encodings, targets, spec.shifts);
  auto& m = run.metrics;
  m["steps_run"] = static_cast<double>(step);
  m["train_loss"] = train_loss;
  m["converged"] = train_loss < spec.loss_tolerance ? 1.0 : 0.0;
  double seen_acc = 0.0, unseen_acc = 0.0, seen_mse = 0.0, unseen_mse = 0.0;
  std::size_t seen = 0, unseen = 0, unseen_perfect = 0;
  for (const auto& p : result.generalization) {
    if (p.trained) {
      seen_acc += p.accuracy;
      seen_mse += p.mse;
      ++seen;
    } else {
      unseen_acc += p.accuracy;
      unseen_mse += p.mse;
      ++unseen;
      if (p.accuracy == 1.0) ++unseen_perfect;
    }
  }
  m["seen_pairs"] = static_cast<double>(seen);
  m["unseen_pairs"] = static_cast<double>(unseen);
  m["seen_accuracy_mean"] = seen ? seen_acc / static_cast<double>(seen) : kNaN;
  m["seen_mse_mean"] = seen ? seen_mse / static_cast<double>(seen) : kNaN;
  m["unseen_accuracy_mean"] = unseen ? unseen_acc / static_cast<double>(unseen) : kNaN;
  m["unseen_mse_mean"] = unseen ? unseen_mse / static_cast<double>(unseen) : kNaN;
  m["unseen_pairs_perfect"] = static_cast<double>(unseen_perfect);
  if (net.hidden.all_finite() && !net.hidden.is_zero()) {
    result.hidden_rank = effective_rank(net.hidden);
    m["hidden_threshold_rank"] = static_cast<double>(result.hidden_rank.threshold_rank);
    m["hidden_entropy_rank"] = result.hidden_rank.entropy_rank;
  }
  m["failed"] = run.failed ? 1.0 : 0.0;
  run.wall_time = clock.seconds();
  return result;
}

namespace {

/// Loss of W on a fixed evaluation set, from its second moments.
struct EvalSet {
  PopulationStats stats;
  double constant = 0.0;

  EvalSet(const Matrix& xs, const Matrix& ys)
      : stats(empirical_stats(xs, ys)), constant(0.5 * inner(ys, ys) / static_cast<double>(ys.rows())) {}

  double loss(const Matrix& w) const {
    return 0.5 * inner(w * stats.sigma_xx, w) - inner(w, stats.sigma_yx) + constant;
  }
};

/// Fraction of samples where the core-label projection of the prediction has
/// the sign of the label's.
double core_sign_accuracy(const Matrix& w, const Matrix& xs, const Matrix& ys, const Vector& core_out) {
  const Matrix wt = w.transpose();
  const Vector a = wt * core_out;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    const double pred = dot(xs.row(i), a);
    const double truth = dot(ys.row(i), core_out);
    if ((pred > 0.0) == (truth > 0.0)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(xs.rows());
}

std::string point_key(OptimizerKind k, double strength, const char* what) {
  return std::string(to_string(k)) + "/strength=" + io::format_double(strength) + "/" + what;
}

}  // namespace

SpuriousSweepResult run_spurious_sweep(const ExperimentConfig& c) {
  c.validate();
  const Stopwatch clock;
  const SpuriousSweepSpec& sw = c.spurious;
  const Rng root(c.seed);
  SpuriousSweepResult out;
  out.run.fingerprint = config_fingerprint(c);

  for (std::size_t rep = 0; rep < sw.replicates; ++rep) {
    const Rng rep_root = root.substream(rep);
    const DeepLinearNet init = datagen::balanced_small_init(rep_root.substream(kInitStream), sw.d_in, sw.hidden,
                                                            sw.d_out, sw.init_scale, false);
    for (double strength : sw.strengths) {
      datagen::SpuriousSpec spec;
      spec.core_strength = sw.core_strength;
      spec.spurious_strength = strength;
      spec.noise_level = sw.noise_level;
      spec.d_in = sw.d_in;
      spec.d_out = sw.d_out;
      const auto data = datagen::spurious_dataset(rep_root.substream(kDataStream), spec, sw.n_train, sw.n_eval);
      const PopulationStats train = empirical_stats(data.xs, data.ys);
      const EvalSet with(data.eval_xs_with, data.eval_ys);
      const EvalSet without(data.eval_xs_without, data.eval_ys);

      for (OptimizerKind kind : sw.optimizers) {
        Optimizer opt(kind, c.hp);
        DeepLinearNet net = init;
        std::array<Matrix*, 2> params{&net.u, &net.v};
        SpuriousPoint point{kind, strength, rep, std::numeric_limits<double>::infinity(), 0.0, c.steps + 1, false};
        for (std::size_t step = 0; step <= c.steps; ++step) {
          if (step % sw.eval_every == 0 || step == c.steps) {
            const Matrix w = product_map(net);
            const double lw = with.loss(w);
            const double lwo = without.loss(w);
            if (!std::isfinite(lw) || !std::isfinite(lwo)) {
              point.failed = true;
              break;
            }
            const double acc = core_sign_accuracy(w, data.eval_xs_without, data.eval_ys, data.core_output);
            out.curves.push_back({kind, strength, rep, step, lw, lwo, acc});
            point.peak_without_loss = std::min(point.peak_without_loss, lwo);
            point.peak_without_accuracy = std::max(point.peak_without_accuracy, acc);
            if (point.separation_step > c.steps && std::abs(lw - lwo) > kSeparationRatio * std::max(lw, lwo)) {
              point.separation_step = step;
            }
          }
          if (step == c.steps) break;
          const DlnGradients g = dln_population_grads(net, train);
          const std::array<Matrix, 2> grads{g.grad_u, g.grad_v};
          opt.step(std::span<Matrix* const>(params), std::span<const Matrix>(grads));
        }
        if (point.failed) out.run.failed = true;
        out.points.push_back(point);
      }
    }
  }

  // Replicate means per (optimizer, strength), then crossover detection on
  // the first two optimizers of the list.
  auto& m = out.run.metrics;
  const auto mean_of = [&](OptimizerKind k, double strength, auto field) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& p : out.points) {
      if (p.optimizer == k && p.strength == strength) {
        total += field(p);
        ++count;
      }
    }
    return count ? total / static_cast<double>(count) : kNaN;
  };
  for (OptimizerKind k : sw.optimizers) {
    for (double s : sw.strengths) {
      m[point_key(k, s, "peak_without_loss")] = mean_of(k, s, [](const SpuriousPoint& p) { return p.peak_without_loss; });
      m[point_key(k, s, "peak_without_accuracy")] =
          mean_of(k, s, [](const SpuriousPoint& p) { return p.peak_without_accuracy; });
      m[point_key(k, s, "separation_step")] =
          mean_of(k, s, [](const SpuriousPoint& p) { return static_cast<double>(p.separation_step); });
    }
  }
  const auto has = [&](OptimizerKind k) {
    return std::find(sw.optimizers.begin(), sw.optimizers.end(), k) != sw.optimizers.end();
  };
  if (has(OptimizerKind::MomentumGD) && has(OptimizerKind::SpectralGD)) {
    std::vector<double> grid = sw.strengths;
    std::sort(grid.begin(), grid.end());
    std::vector<bool> worse;
    for (double s : grid) {
      const double gd = m[point_key(OptimizerKind::MomentumGD, s, "peak_without_loss")];
      const double sp = m[point_key(OptimizerKind::SpectralGD, s, "peak_without_loss")];
      worse.push_back(gd > sp * (1.0 + kCrossoverMargin));
    }
    double crossover = -1.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      const bool tail = std::all_of(worse.begin() + static_cast<std::ptrdiff_t>(i), worse.end(), [](bool b) { return b; });
      const bool head = std::any_of(worse.begin(), worse.begin() + static_cast<std::ptrdiff_t>(i), [](bool b) { return !b; });
      if (tail && head) {
        crossover = grid[i];
        break;
      }
    }
    m["crossover_strength"] = crossover;
  }
  m["failed"] = out.run.failed ? 1.0 : 0.0;
  if (out.run.failed) out.run.failure = "at least one sweep point diverged";
  out.run.wall_time = clock.seconds();
  return out;
}

std::string trajectory_csv(const std::vector<TrajectoryRecord>& trajectory) {
  std::ostringstream out;
  const std::size_t width = trajectory.empty() ? 0 : trajectory.front().product_singular_values.size();
  const std::size_t rows = trajectory.empty() ? 0 : trajectory.front().alignment.size();
  out << "step,time,loss,balancedness_gap";
  for (std::size_t k = 0; k < width; ++k) out << ",sigma_" << k + 1;
  for (std::size_t i = 0; i < rows; ++i) out << ",u" << i << "_r1,u" << i << "_r2";
  out << '\n';
  for (const auto& r : trajectory) {
    out << r.step << ',' << io::format_double(r.time) << ',' << io::format_double(r.loss) << ','
        << io::format_double(r.balancedness_gap);
    for (double s : r.product_singular_values) out << ',' << io::format_double(s);
    for (const auto& a : r.alignment) out << ',' << io::format_double(a[0]) << ',' << io::format_double(a[1]);
    out << '\n';
  }
  return out.str();
}

std::string metrics_json(const RunResult& result) {
  nlohmann::json j;
  j["fingerprint"] = result.fingerprint;
  j["failed"] = result.failed;
  j["failure"] = result.failure;
  j["wall_time_seconds"] = result.wall_time;
  j["metrics"] = nlohmann::json::object();
  for (const auto& [k, v] : result.metrics) j["metrics"][k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json();
  return j.dump(2) + "\n";
}

void write_run_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const RunResult& result) {
  io::write_atomic(dir / "config.json", serialize_config(config));
  io::write_atomic(dir / "trajectory.csv", trajectory_csv(result.trajectory));
  // metrics.json last: its presence marks a complete run directory.
  io::write_atomic(dir / "metrics.json", metrics_json(result));
}

namespace {

std::string oscillation_traces_csv(const OscillationResult& r) {
  std::ostringstream out;
  const std::size_t width = r.points.empty() || r.points.front().trajectory.empty()
                                ? 0
                                : r.points.front().trajectory.front().product_singular_values.size();
  out << "learning_rate,momentum,step,time,loss";
  for (std::size_t k = 0; k < width; ++k) out << ",sigma_" << k + 1;
  out << '\n';
  for (const auto& p : r.points) {
    for (const auto& rec : p.trajectory) {
      out << io::format_double(p.learning_rate) << ',' << (p.momentum ? 1 : 0) << ',' << rec.step << ','
          << io::format_double(rec.time) << ',' << io::format_double(rec.loss);
      for (double s : rec.product_singular_values) out << ',' << io::format_double(s);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace

void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const DynamicsResult& result) {
  save_model(dir / "model", result.net);
  write_run_outputs(dir, config, result.run);
}

void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const OscillationResult& result) {
  std::ostringstream table;
  table << "learning_rate,momentum,amplitude,reference_s2,failed\n";
  for (const auto& p : result.points) {
    table << io::format_double(p.learning_rate) << ',' << (p.momentum ? 1 : 0) << ','
          << io::format_double(p.amplitude) << ',' << io::format_double(result.reference_s2) << ','
          << (p.failed ? 1 : 0) << '\n';
  }
  io::write_atomic(dir / "sweep_summary.csv", table.str());
  io::write_atomic(dir / "config.json", serialize_config(config));
  io::write_atomic(dir / "trajectory.csv", oscillation_traces_csv(result));
  io::write_atomic(dir / "metrics.json", metrics_json(result.run));
}

void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const RoutingResult& result) {
  std::ostringstream table;
  table << "in_source,out_source,trained,mse,accuracy\n";
  for (const auto& p : result.generalization) {
    table << p.in_src << ',' << p.out_src << ',' << (p.trained ? 1 : 0) << ',' << io::format_double(p.mse) << ','
          << io::format_double(p.accuracy) << '\n';
  }
  io::write_atomic(dir / "generalization.csv", table.str());
  save_model(dir / "model", result.net);
  write_run_outputs(dir, config, result.run);
}

void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                   const SpuriousSweepResult& result) {
  std::ostringstream table;
  table << "optimizer,strength,replicate,peak_without_loss,peak_without_accuracy,separation_step,failed\n";
  for (const auto& p : result.points) {
    table << to_string(p.optimizer) << ',' << io::format_double(p.strength) << ',' << p.replicate << ','
          << io::format_double(p.peak_without_loss) << ',' << io::format_double(p.peak_without_accuracy) << ','
          << p.separation_step << ',' << (p.failed ? 1 : 0) << '\n';
  }
  std::ostringstream curves;
  curves << "optimizer,strength,replicate,step,loss_with,loss_without,accuracy_without\n";
  for (const auto& r : result.curves) {
    curves << to_string(r.optimizer) << ',' << io::format_double(r.strength) << ',' << r.replicate << ',' << r.step
           << ',' << io::format_double(r.loss_with) << ',' << io::format_double(r.loss_without) << ','
           << io::format_double(r.accuracy_without) << '\n';
  }
  io::write_atomic(dir / "sweep_summary.csv", table.str());
  io::write_atomic(dir / "trajectory.csv", curves.str());
  io::write_atomic(dir / "config.json", serialize_config(config));
  io::write_atomic(dir / "metrics.json", metrics_json(result.run));
}

std::string oracle_curves_csv(const Vector& spectrum, double init_scale, double t_max, double dt) {
  const theory::SpectrumSpec spec{spectrum, init_scale};
  spec.validate();
  if (!(dt > 0.0)) throw InvalidInput("oracle: dt must be positive");
  if (!(t_max >= 0.0)) throw InvalidInput("oracle: t_max must be non-negative");
  std::ostringstream out;
  out << "t,k,sigma_gd,sigma_spectral\n";
  const auto samples = static_cast<std::size_t>(std::floor(t_max / dt + 1e-9));
  for (std::size_t i = 0; i <= samples; ++i) {
    const double t = static_cast<double>(i) * dt;
    for (std::size_t k = 0; k < spec.size(); ++k) {
      out << io::format_double(t) << ',' << k + 1 << ',' << io::format_double(theory::gd_sigma_trajectory(spec, k, t))
          << ',' << io::format_double(theory::spectral_sigma_trajectory(spec, k, t)) << '\n';
    }
  }
  return out.str();
}

}  // namespace muonlab
