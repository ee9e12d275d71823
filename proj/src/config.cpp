#include "muonlab/config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "muonlab/errors.hpp"
#include "muonlab/io.hpp"

namespace muonlab {

using nlohmann::json;

namespace {

template <typename Enum, std::size_t N>
Enum parse_named(std::string_view name, const std::pair<std::string_view, Enum> (&table)[N], const char* what) {
  for (const auto& [key, value] : table)
    if (key == name) return value;
  std::string known;
  for (const auto& [key, value] : table) known += (known.empty() ? "" : ", ") + std::string(key);
  throw InvalidInput(std::string("unknown ") + what + " '" + std::string(name) + "' (expected one of: " + known + ")");
}

template <typename Enum, std::size_t N>
std::string_view name_of(Enum value, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [key, v] : table)
    if (v == value) return key;
  return "?";
}

constexpr std::pair<std::string_view, ExperimentKind> kExperimentNames[] = {
    {"dynamics", ExperimentKind::Dynamics},         {"oscillation", ExperimentKind::Oscillation},
    {"routing", ExperimentKind::Routing},           {"spurious-sweep", ExperimentKind::SpuriousSweep},
    {"oracle", ExperimentKind::Oracle},             {"orthogonalize", ExperimentKind::Orthogonalize},
};
constexpr std::pair<std::string_view, DataMode> kModeNames[] = {
    {"population", DataMode::Population},
    {"sample", DataMode::Sample},
};
constexpr std::pair<std::string_view, InitMode> kInitNames[] = {
    {"gaussian", InitMode::Gaussian},
    {"balanced", InitMode::Balanced},
    {"aligned", InitMode::Aligned},
};

/// Reads the fields of one JSON object and remembers which keys were used, so
/// leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw InvalidInput(where("") + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw InvalidInput(where(key) + ": wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  void get_size(const char* key, std::size_t& out) {
    used_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!it->is_number_unsigned()) {
      throw InvalidInput(where(key) + ": expected a non-negative integer");
    }
    out = it->get<std::size_t>();
  }

  void get_double(const char* key, double& out) {
    used_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!it->is_number()) throw InvalidInput(where(key) + ": expected a number");
    out = it->get<double>();
  }

  void get_doubles(const char* key, std::vector<double>& out) {
    used_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!it->is_array()) throw InvalidInput(where(key) + ": expected an array of numbers");
    std::vector<double> values;
    for (const auto& v : *it) {
      if (!v.is_number()) throw InvalidInput(where(key) + ": expected an array of numbers");
      values.push_back(v.get<double>());
    }
    out = std::move(values);
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const json* child(const char* key) {
    used_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string where(std::string_view key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!used_.count(key)) throw InvalidInput("unknown field '" + where(key) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

void read_optimizer(const json& node, ExperimentConfig& c) {
  if (node.is_string()) {
    c.optimizer = parse_optimizer_kind(node.get<std::string>());
    return;
  }
  ObjectReader r(node, "optimizer");
  std::string kind(to_string(c.optimizer));
  r.get("kind", kind);
  c.optimizer = parse_optimizer_kind(kind);
  r.get_double("learning_rate", c.hp.learning_rate);
  r.get_double("momentum", c.hp.momentum);
  r.get_double("adam_beta1", c.hp.adam_beta1);
  r.get_double("adam_beta2", c.hp.adam_beta2);
  r.get_double("adam_eps", c.hp.adam_eps);
  r.get("ns_iterations", c.hp.ns_iterations);
  r.get_double("rank_cutoff", c.hp.rank_cutoff);
  r.finish();
}

void read_model(const json& node, DeepLinearSpec& m) {
  ObjectReader r(node, "model");
  r.get_size("d_in", m.d_in);
  r.get_size("hidden", m.hidden);
  r.get_size("d_out", m.d_out);
  std::string init(to_string(m.init));
  r.get("init", init);
  m.init = parse_init_mode(init);
  r.get_double("init_scale", m.init_scale);
  r.get("record_alignment", m.record_alignment);
  r.finish();
}

void read_data(const json& node, DataSpec& d) {
  ObjectReader r(node, "data");
  r.get_doubles("spectrum", d.spectrum);
  std::string mode(to_string(d.mode));
  r.get("mode", mode);
  d.mode = parse_data_mode(mode);
  r.get_size("n", d.n);
  r.get_double("noise", d.noise);
  r.finish();
}

void read_oscillation(const json& node, OscillationSpec& o) {
  ObjectReader r(node, "oscillation");
  r.get_doubles("learning_rates", o.learning_rates);
  r.get_double("horizon", o.horizon);
  r.get("compare_momentum", o.compare_momentum);
  r.finish();
}

void read_routing(const json& node, RoutingSpec& s) {
  ObjectReader r(node, "routing");
  r.get_size("sources", s.sources);
  r.get_size("shifts", s.shifts);
  r.get_size("numbers", s.numbers);
  r.get_size("input_dim", s.input_dim);
  r.get_size("hidden", s.hidden);
  r.get_size("output_dim", s.output_dim);
  r.get_double("init_scale", s.init_scale);
  r.get_double("loss_tolerance", s.loss_tolerance);
  r.finish();
}

void read_spurious(const json& node, SpuriousSweepSpec& s) {
  ObjectReader r(node, "spurious");
  r.get_double("core_strength", s.core_strength);
  r.get_doubles("strengths", s.strengths);
  r.get_double("noise_level", s.noise_level);
  r.get_size("d_in", s.d_in);
  r.get_size("hidden", s.hidden);
  r.get_size("d_out", s.d_out);
  r.get_double("init_scale", s.init_scale);
  r.get_size("n_train", s.n_train);
  r.get_size("n_eval", s.n_eval);
  r.get_size("eval_every", s.eval_every);
  r.get_size("replicates", s.replicates);
  if (const json* opts = r.child("optimizers")) {
    if (!opts->is_array()) throw InvalidInput("spurious.optimizers: expected an array of optimizer names");
    s.optimizers.clear();
    for (const auto& v : *opts) {
      if (!v.is_string()) throw InvalidInput("spurious.optimizers: expected an array of optimizer names");
      s.optimizers.push_back(parse_optimizer_kind(v.get<std::string>()));
    }
  }
  r.finish();
}

void read_oracle(const json& node, OracleSpec& o) {
  ObjectReader r(node, "oracle");
  r.get_double("t_max", o.t_max);
  r.get_double("dt", o.dt);
  r.finish();
}

void read_orthogonalize(const json& node, OrthogonalizeSpec& o) {
  ObjectReader r(node, "orthogonalize");
  r.get("input", o.input);
  r.get("method", o.method);
  r.get("iterations", o.iterations);
  r.finish();
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidInput("override '" + assignment + "' must have the form key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  json value = parse_override_value(assignment.substr(eq + 1));
  // "optimizer=NAME" only changes the kind; hyperparameters set elsewhere stay.
  if (path == "optimizer" && value.is_string()) {
    root["optimizer"]["kind"] = std::move(value);
    return;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw InvalidInput("override '" + assignment + "' has an empty path component");
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (node == &root && key == "optimizer" && next.is_string()) next = json{{"kind", next}};
    if (!next.is_object()) {
      throw InvalidInput("override '" + assignment + "': '" + path.substr(0, dot) + "' is not an object");
    }
    node = &next;
    start = dot + 1;
  }
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw InvalidInput(field + ": " + what);
}

}  // namespace

std::string_view to_string(ExperimentKind kind) { return name_of(kind, kExperimentNames); }
std::string_view to_string(DataMode mode) { return name_of(mode, kModeNames); }
std::string_view to_string(InitMode mode) { return name_of(mode, kInitNames); }
ExperimentKind parse_experiment_kind(std::string_view name) { return parse_named(name, kExperimentNames, "experiment"); }
DataMode parse_data_mode(std::string_view name) { return parse_named(name, kModeNames, "data mode"); }
InitMode parse_init_mode(std::string_view name) { return parse_named(name, kInitNames, "init mode"); }

std::size_t default_steps(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Routing: return 100000;
    case ExperimentKind::SpuriousSweep: return 30000;
    default: return 20000;
  }
}

void ExperimentConfig::validate() const {
  try {
    hp.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string("optimizer.") + e.what());
  }
  require(steps > 0, "steps", "must be positive");
  require(log_every > 0, "log_every", "must be positive");

  const auto& s = data.spectrum;
  require(!s.empty(), "data.spectrum", "must not be empty");
  for (std::size_t i = 0; i < s.size(); ++i) {
    require(std::isfinite(s[i]) && s[i] > 0.0, "data.spectrum", "values must be positive and finite");
    require(i == 0 || s[i] <= s[i - 1], "data.spectrum", "values must be non-increasing");
  }
  require(data.mode == DataMode::Population || data.n > 0, "data.n", "must be positive in sample mode");
  require(data.noise >= 0.0 && std::isfinite(data.noise), "data.noise", "must be non-negative");
  require(model.hidden > 0, "model.hidden", "must be positive");
  require(model.d_in >= s.size(), "model.d_in", "must be at least the spectrum length");
  require(model.d_out >= s.size(), "model.d_out", "must be at least the spectrum length");
  require(model.init_scale > 0.0 && std::isfinite(model.init_scale), "model.init_scale", "must be positive");
  require(model.init != InitMode::Aligned || model.hidden >= s.size(), "model.hidden",
          "aligned init needs hidden >= spectrum length");
  if (experiment == ExperimentKind::Dynamics || experiment == ExperimentKind::Oscillation) {
    require(model.init != InitMode::Aligned || data.mode == DataMode::Population, "model.init",
            "aligned init is only defined in population mode");
  }

  require(!oscillation.learning_rates.empty(), "oscillation.learning_rates", "must not be empty");
  for (double lr : oscillation.learning_rates)
    require(lr > 0.0 && std::isfinite(lr), "oscillation.learning_rates", "values must be positive");
  require(oscillation.horizon > 0.0, "oscillation.horizon", "must be positive");
  if (experiment == ExperimentKind::Oscillation) {
    require(s.size() >= 2, "data.spectrum", "oscillation needs at least two singular values");
  }

  require(routing.sources > 0, "routing.sources", "must be positive");
  require(routing.shifts > 0 && routing.shifts <= routing.sources, "routing.shifts", "must lie in [1, sources]");
  require(routing.numbers > 0, "routing.numbers", "must be positive");
  require(routing.input_dim >= routing.numbers, "routing.input_dim", "must be at least routing.numbers");
  require(routing.hidden > 0, "routing.hidden", "must be positive");
  require(routing.output_dim == 7, "routing.output_dim", "the built-in targets have dimension 7");
  require(routing.numbers <= 4, "routing.numbers", "the built-in targets cover at most 4 numbers");
  require(routing.init_scale > 0.0, "routing.init_scale", "must be positive");
  require(routing.loss_tolerance >= 0.0, "routing.loss_tolerance", "must be non-negative");

  require(spurious.core_strength > 0.0, "spurious.core_strength", "must be positive");
  require(!spurious.strengths.empty(), "spurious.strengths", "must not be empty");
  for (double v : spurious.strengths) require(v >= 0.0 && std::isfinite(v), "spurious.strengths", "values must be non-negative");
  require(spurious.noise_level >= 0.0, "spurious.noise_level", "must be non-negative");
  require(spurious.d_in >= 2, "spurious.d_in", "must be at least 2");
  require(spurious.d_out >= 2, "spurious.d_out", "must be at least 2");
  require(spurious.hidden > 0, "spurious.hidden", "must be positive");
  require(spurious.init_scale > 0.0, "spurious.init_scale", "must be positive");
  require(spurious.n_train > 0 && spurious.n_eval > 0, "spurious.n_train", "sample counts must be positive");
  require(spurious.eval_every > 0, "spurious.eval_every", "must be positive");
  require(spurious.replicates > 0, "spurious.replicates", "must be positive");
  require(!spurious.optimizers.empty(), "spurious.optimizers", "must not be empty");

  require(oracle.t_max >= 0.0, "oracle.t_max", "must be non-negative");
  require(oracle.dt > 0.0, "oracle.dt", "must be positive");

  require(orthogonalize.method == "exact" || orthogonalize.method == "newton_schulz", "orthogonalize.method",
          "must be 'exact' or 'newton_schulz'");
  require(orthogonalize.iterations > 0, "orthogonalize.iterations", "must be positive");
  if (experiment == ExperimentKind::Orthogonalize) {
    require(!orthogonalize.input.empty(), "orthogonalize.input", "is required");
  }
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  const auto hp_eq = [](const Hyperparams& a, const Hyperparams& b) {
    return a.learning_rate == b.learning_rate && a.momentum == b.momentum && a.adam_beta1 == b.adam_beta1 &&
           a.adam_beta2 == b.adam_beta2 && a.adam_eps == b.adam_eps && a.ns_iterations == b.ns_iterations &&
           a.rank_cutoff == b.rank_cutoff;
  };
  return experiment == o.experiment && optimizer == o.optimizer && hp_eq(hp, o.hp) && seed == o.seed &&
         steps == o.steps && log_every == o.log_every && out == o.out && model == o.model && data == o.data &&
         oscillation == o.oscillation && routing == o.routing && spurious == o.spurious && oracle == o.oracle &&
         orthogonalize == o.orthogonalize;
}

ExperimentConfig parse_config(std::string_view json_text, const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw InvalidInput("config must be a JSON object");
  if (root.contains("optimizer") && root["optimizer"].is_string()) {
    root["optimizer"] = json{{"kind", root["optimizer"]}};
  }
  for (const auto& o : overrides) apply_override(root, o);

  ExperimentConfig c;
  ObjectReader r(root, "");
  std::string kind(to_string(c.experiment));
  r.get("experiment", kind);
  c.experiment = parse_experiment_kind(kind);
  c.steps = default_steps(c.experiment);
  if (c.experiment == ExperimentKind::Routing) c.optimizer = OptimizerKind::MomentumGD;
  if (c.experiment == ExperimentKind::Oscillation) c.optimizer = OptimizerKind::SpectralGD;
  if (c.experiment == ExperimentKind::Oscillation) {
    // Label noise keeps a full-rank residual after saturation.
    c.data.mode = DataMode::Sample;
    c.data.noise = 0.1;
  }

  if (const json* opt = r.child("optimizer")) read_optimizer(*opt, c);
  if (r.has("seed")) {
    const json* seed = r.child("seed");
    if (!seed->is_number_unsigned()) throw InvalidInput("seed: expected a non-negative integer");
    c.seed = seed->get<std::uint64_t>();
  }
  r.get_size("steps", c.steps);
  r.get_size("log_every", c.log_every);
  r.get("out", c.out);
  if (const json* n = r.child("model")) read_model(*n, c.model);
  if (const json* n = r.child("data")) read_data(*n, c.data);
  if (const json* n = r.child("oscillation")) read_oscillation(*n, c.oscillation);
  if (const json* n = r.child("routing")) read_routing(*n, c.routing);
  if (const json* n = r.child("spurious")) read_spurious(*n, c.spurious);
  if (const json* n = r.child("oracle")) read_oracle(*n, c.oracle);
  if (const json* n = r.child("orthogonalize")) read_orthogonalize(*n, c.orthogonalize);
  r.finish();

  if (c.model.d_in == 0) c.model.d_in = c.data.spectrum.size();
  if (c.model.d_out == 0) c.model.d_out = c.data.spectrum.size();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw InvalidInput("cannot read config '" + path + "': " + e.what());
  }
  return parse_config(text, overrides);
}

namespace {

json to_json(const ExperimentConfig& c, bool include_output) {
  json j;
  j["experiment"] = to_string(c.experiment);
  j["optimizer"] = {
      {"kind", to_string(c.optimizer)},         {"learning_rate", c.hp.learning_rate},
      {"momentum", c.hp.momentum},              {"adam_beta1", c.hp.adam_beta1},
      {"adam_beta2", c.hp.adam_beta2},          {"adam_eps", c.hp.adam_eps},
      {"ns_iterations", c.hp.ns_iterations},    {"rank_cutoff", c.hp.rank_cutoff},
  };
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["log_every"] = c.log_every;
  if (include_output) j["out"] = c.out;
  j["model"] = {{"d_in", c.model.d_in},
                {"hidden", c.model.hidden},
                {"d_out", c.model.d_out},
                {"init", to_string(c.model.init)},
                {"init_scale", c.model.init_scale},
                {"record_alignment", c.model.record_alignment}};
  j["data"] = {{"spectrum", c.data.spectrum},
               {"mode", to_string(c.data.mode)},
               {"n", c.data.n},
               {"noise", c.data.noise}};
  j["oscillation"] = {{"learning_rates", c.oscillation.learning_rates},
                      {"horizon", c.oscillation.horizon},
                      {"compare_momentum", c.oscillation.compare_momentum}};
  j["routing"] = {{"sources", c.routing.sources},       {"shifts", c.routing.shifts},
                  {"numbers", c.routing.numbers},       {"input_dim", c.routing.input_dim},
                  {"hidden", c.routing.hidden},         {"output_dim", c.routing.output_dim},
                  {"init_scale", c.routing.init_scale}, {"loss_tolerance", c.routing.loss_tolerance}};
  json opts = json::array();
  for (auto k : c.spurious.optimizers) opts.push_back(to_string(k));
  j["spurious"] = {{"core_strength", c.spurious.core_strength},
                   {"strengths", c.spurious.strengths},
                   {"noise_level", c.spurious.noise_level},
                   {"d_in", c.spurious.d_in},
                   {"hidden", c.spurious.hidden},
                   {"d_out", c.spurious.d_out},
                   {"init_scale", c.spurious.init_scale},
                   {"n_train", c.spurious.n_train},
                   {"n_eval", c.spurious.n_eval},
                   {"eval_every", c.spurious.eval_every},
                   {"replicates", c.spurious.replicates},
                   {"optimizers", opts}};
  j["oracle"] = {{"t_max", c.oracle.t_max}, {"dt", c.oracle.dt}};
  j["orthogonalize"] = {{"input", c.orthogonalize.input},
                        {"method", c.orthogonalize.method},
                        {"iterations", c.orthogonalize.iterations}};
  return j;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& config, bool include_output) {
  return to_json(config, include_output).dump(2) + "\n";
}

std::string config_fingerprint(const ExperimentConfig& config) {
  const std::string canonical = to_json(config, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace muonlab
