// Command-line driver: run / oracle / orthogonalize / sweep.
//
// Exit status: 0 success, 1 invalid input or configuration, 2 numerical failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "muonlab/config.hpp"
#include "muonlab/errors.hpp"
#include "muonlab/experiments.hpp"
#include "muonlab/io.hpp"
#include "muonlab/linalg.hpp"

namespace {

using namespace muonlab;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

Vector parse_number_list(const std::string& text, const char* what) {
  Vector out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidInput(std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw InvalidInput(std::string(what) + ": empty list");
  return out;
}

std::string output_dir(const ExperimentConfig& c) {
  return c.out.empty() ? "runs/" + config_fingerprint(c) : c.out;
}

/// Runs one resolved config and writes its artifacts.
RunResult execute(const ExperimentConfig& c, const std::filesystem::path& dir) {
  switch (c.experiment) {
    case ExperimentKind::Dynamics: {
      auto r = run_dynamics(c);
      write_outputs(dir, c, r);
      return r.run;
    }
    case ExperimentKind::Oscillation: {
      auto r = run_oscillation(c);
      write_outputs(dir, c, r);
      return r.run;
    }
    case ExperimentKind::Routing: {
      auto r = run_routing(c);
      write_outputs(dir, c, r);
      return r.run;
    }
    case ExperimentKind::SpuriousSweep: {
      auto r = run_spurious_sweep(c);
      write_outputs(dir, c, r);
      return r.run;
    }
    case ExperimentKind::Oracle: {
      io::write_atomic(dir / "curves.csv",
                       oracle_curves_csv(c.data.spectrum, c.model.init_scale, c.oracle.t_max, c.oracle.dt));
      io::write_atomic(dir / "config.json", serialize_config(c));
      return {config_fingerprint(c), {}, {}, 0.0, false, {}};
    }
    case ExperimentKind::Orthogonalize: {
      const Matrix g = load_matrix(c.orthogonalize.input);
      const Matrix q = c.orthogonalize.method == "exact" ? orthogonalize_exact(g, c.hp.rank_cutoff)
                                                         : newton_schulz_orthogonalize(g, c.orthogonalize.iterations);
      save_matrix((dir / "orthogonalized.mat").string(), q);
      io::write_atomic(dir / "config.json", serialize_config(c));
      return {config_fingerprint(c), {}, {}, 0.0, false, {}};
    }
  }
  throw InvalidInput("unknown experiment kind");
}

ExperimentConfig resolve(const std::string& config_path, std::vector<std::string> overrides,
                         const std::string& out, const std::string& seed) {
  if (!seed.empty()) overrides.push_back("seed=" + seed);
  if (!out.empty()) overrides.push_back("out=\"" + out + "\"");
  return config_path.empty() ? parse_config("{}", overrides) : load_config(config_path, overrides);
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out,
            const std::string& seed) {
  const ExperimentConfig c = resolve(config_path, overrides, out, seed);
  const std::string dir = output_dir(c);
  const RunResult r = execute(c, dir);
  std::cout << "wrote " << dir << " (fingerprint " << r.fingerprint << ")\n";
  if (r.failed) {
    std::cerr << "run failed: " << r.failure << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

/// Expands "key=v1,v2,..." axes into the Cartesian product of override lists.
std::vector<std::vector<std::string>> expand_grid(const std::vector<std::string>& axes) {
  std::vector<std::vector<std::string>> combos{{}};
  for (const auto& axis : axes) {
    const auto eq = axis.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidInput("grid axis '" + axis + "' must be key=v1,v2,...");
    const std::string key = axis.substr(0, eq);
    std::vector<std::string> values;
    std::string rest = axis.substr(eq + 1);
    // Split on commas outside brackets so array values like [2,1] survive.
    int depth = 0;
    std::string cur;
    for (char ch : rest) {
      if (ch == '[') ++depth;
      if (ch == ']') --depth;
      if (ch == ',' && depth == 0) {
        values.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    values.push_back(cur);
    std::vector<std::vector<std::string>> next;
    for (const auto& combo : combos) {
      for (const auto& v : values) {
        auto extended = combo;
        extended.push_back(key + "=" + v);
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  return combos;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::vector<std::string>& axes, const std::string& out, const std::string& seed, int jobs) {
  if (jobs < 1) throw InvalidInput("--jobs must be at least 1");
  const std::string root = out.empty() ? "runs/sweep" : out;
  struct Job {
    ExperimentConfig config;
    std::vector<std::string> grid;
    std::string fingerprint;
    RunResult result;
    std::string error;
    int status = kExitOk;
  };
  std::vector<Job> work;
  for (const auto& combo : expand_grid(axes)) {
    auto all = overrides;
    all.insert(all.end(), combo.begin(), combo.end());
    Job j;
    j.config = resolve(config_path, all, "", seed);
    j.fingerprint = config_fingerprint(j.config);
    j.config.out = root + "/" + j.fingerprint;
    j.grid = combo;
    work.push_back(std::move(j));
  }
  std::sort(work.begin(), work.end(), [](const Job& a, const Job& b) { return a.fingerprint < b.fingerprint; });
  work.erase(std::unique(work.begin(), work.end(),
                         [](const Job& a, const Job& b) { return a.fingerprint == b.fingerprint; }),
             work.end());

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < work.size(); i = next++) {
      Job& j = work[i];
      try {
        j.result = execute(j.config, j.config.out);
        if (j.result.failed) j.status = kExitNumerical;
      } catch (const InvalidInput& e) {
        j.status = kExitInvalid;
        j.error = e.what();
      } catch (const std::exception& e) {
        j.status = kExitNumerical;
        j.error = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), work.size());
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::set<std::string> metric_names;
  for (const auto& j : work)
    for (const auto& [k, v] : j.result.metrics) metric_names.insert(k);
  std::ostringstream table;
  table << "fingerprint,overrides,status";
  for (const auto& k : metric_names) table << ',' << k;
  table << '\n';
  int worst = kExitOk;
  for (const auto& j : work) {
    std::string joined;
    for (const auto& g : j.grid) joined += (joined.empty() ? "" : ";") + g;
    std::string quoted = "\"";
    for (char ch : joined) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    quoted += '"';
    table << j.fingerprint << ',' << quoted << ',' << j.status;
    for (const auto& k : metric_names) {
      const auto it = j.result.metrics.find(k);
      table << ',' << (it == j.result.metrics.end() ? std::string() : io::format_double(it->second));
    }
    table << '\n';
    if (!j.error.empty()) std::cerr << j.fingerprint << ": " << j.error << "\n";
    worst = std::max(worst, j.status);
  }
  io::write_atomic(std::filesystem::path(root) / "sweep_summary.csv", table.str());
  std::cout << "wrote " << work.size() << " runs under " << root << "\n";
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral optimizer laboratory"};
  app.require_subcommand(1);

  std::string config_path, out, seed;
  std::vector<std::string> overrides, axes;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("--config", config_path, "Config file (JSON)");
  run->add_option("--set", overrides, "Override KEY.PATH=VALUE (repeatable)");
  run->add_option("--out", out, "Output directory");
  run->add_option("--seed", seed, "Seed override");

  auto* sweep = app.add_subcommand("sweep", "Run a grid of configs, optionally in parallel");
  sweep->add_option("--config", config_path, "Base config file (JSON)");
  sweep->add_option("--set", overrides, "Override applied to every run (repeatable)");
  sweep->add_option("--grid", axes, "Axis KEY.PATH=v1,v2,... (repeatable)");
  sweep->add_option("--out", out, "Sweep root directory");
  sweep->add_option("--seed", seed, "Seed override");
  sweep->add_option("--jobs", jobs, "Parallel workers")->check(CLI::PositiveNumber);

  std::string spectrum = "2,1", oracle_out;
  double t_max = 3.0, dt = 0.01, init_scale = 1e-2;
  auto* oracle = app.add_subcommand("oracle", "Write closed-form σ_k(t) curves as CSV");
  oracle->add_option("--spectrum", spectrum, "Comma-separated singular values");
  oracle->add_option("--t-max", t_max, "Final time");
  oracle->add_option("--dt", dt, "Sampling interval");
  oracle->add_option("--init-scale", init_scale, "σ₀ for the logistic curves");
  oracle->add_option("--out", oracle_out, "Output CSV")->required();

  std::string in_path, ortho_out, method = "exact";
  int iterations = 5;
  auto* ortho = app.add_subcommand("orthogonalize", "Orthogonalize a matrix file");
  ortho->add_option("--in", in_path, "Input matrix (rows cols header, then rows)")->required();
  ortho->add_option("--out", ortho_out, "Output matrix")->required();
  ortho->add_option("--method", method, "exact | newton_schulz")->check(CLI::IsMember({"exact", "newton_schulz"}));
  ortho->add_option("--iterations", iterations, "Newton-Schulz iterations")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run) return cmd_run(config_path, overrides, out, seed);
    if (*sweep) return cmd_sweep(config_path, overrides, axes, out, seed, jobs);
    if (*oracle) {
      io::write_atomic(oracle_out, oracle_curves_csv(parse_number_list(spectrum, "--spectrum"), init_scale, t_max, dt));
      return kExitOk;
    }
    if (*ortho) {
      const Matrix g = load_matrix(in_path);
      const Matrix q = method == "exact" ? orthogonalize_exact(g) : newton_schulz_orthogonalize(g, iterations);
      save_matrix(ortho_out, q);
      return kExitOk;
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
