#include "doctest.h"

#include <string>

#include "muonlab/config.hpp"
#include "muonlab/errors.hpp"

using namespace muonlab;

namespace {

std::string error_of(const std::string& json, const std::vector<std::string>& overrides = {}) {
  try {
    parse_config(json, overrides);
  } catch (const InvalidInput& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("minimal config fills defaults") {
  const auto c = parse_config(R"({"experiment":"dynamics","optimizer":"spectral_gd","seed":1})");
  CHECK(c.experiment == ExperimentKind::Dynamics);
  CHECK(c.optimizer == OptimizerKind::SpectralGD);
  CHECK(c.seed == 1);
  CHECK(c.hp.learning_rate == 1e-3);
  CHECK(c.data.spectrum == Vector{2.0, 1.0});
  CHECK(c.model.init_scale == 1e-2);
  CHECK(c.model.d_in == 2);
  CHECK(c.model.d_out == 2);
  CHECK(c.steps == default_steps(ExperimentKind::Dynamics));
  CHECK(c.log_every == 10);
}

TEST_CASE("kind-dependent defaults") {
  CHECK(parse_config(R"({"experiment":"routing"})").optimizer == OptimizerKind::MomentumGD);
  CHECK(parse_config(R"({"experiment":"routing"})").steps == 100000);
  CHECK(parse_config(R"({"experiment":"spurious-sweep"})").steps == 30000);
  const auto osc = parse_config(R"({"experiment":"oscillation"})");
  CHECK(osc.optimizer == OptimizerKind::SpectralGD);
  CHECK(osc.data.mode == DataMode::Sample);
  CHECK(osc.data.noise == 0.1);
  CHECK(parse_config(R"({"experiment":"routing"})").routing.init_scale == 3e-4);
}

TEST_CASE("unknown fields are rejected with their path") {
  CHECK(error_of(R"({"learning_rte":0.1})").find("learning_rte") != std::string::npos);
  CHECK(error_of(R"({"optimizer":{"kind":"gd","learning_rte":0.1}})").find("optimizer.learning_rte") !=
        std::string::npos);
  CHECK(error_of(R"({"data":{"spectrm":[1]}})").find("spectrm") != std::string::npos);
}

TEST_CASE("malformed and invalid configs") {
  CHECK_FALSE(error_of("{\"seed\": 1,,}").empty());
  CHECK_FALSE(error_of(R"({"experiment":"nope"})").empty());
  CHECK(error_of(R"({"optimizer":{"kind":"gd","learning_rate":-1}})").find("learning_rate") != std::string::npos);
  CHECK(error_of(R"({"optimizer":{"kind":"gd","momentum":1.0}})").find("momentum") != std::string::npos);
  CHECK(error_of(R"({"seed":-3})").find("seed") != std::string::npos);
  CHECK(error_of(R"({"steps":1.5})").find("steps") != std::string::npos);
  CHECK(error_of(R"({"data":{"spectrum":[1,2]}})").find("spectrum") != std::string::npos);
  CHECK_FALSE(error_of(R"({"model":{"d_in":1}})").empty());
}

TEST_CASE("round trip through canonical JSON is the identity") {
  const std::vector<std::string> sources = {
      R"({"data":{"spectrum":[8,1]},"model":{"init":"aligned","init_scale":0.0001}})",
      R"({})",
      R"({"experiment":"routing","optimizer":{"kind":"spectral_gd","learning_rate":0.002},"seed":9})",
      R"({"experiment":"spurious-sweep","spurious":{"strengths":[0.5,2],"replicates":3},"out":"x/y"})",
      R"({"experiment":"oscillation","oscillation":{"learning_rates":[0.01],"compare_momentum":false}})",
      R"({"data":{"spectrum":[4,2,1],"mode":"sample","n":100,"noise":0.1},"model":{"hidden":6,"init":"balanced","init_scale":0.0001}})",
  };
  for (const auto& src : sources) {
    const auto c = parse_config(src);
    const std::string text = serialize_config(c);
    const auto back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
  }
}

TEST_CASE("dotted overrides") {
  const auto c = parse_config(R"({"experiment":"dynamics"})",
                              {"optimizer=spectral_gd", "optimizer.learning_rate=0.005", "data.spectrum=[3,1]",
                               "model.hidden=7", "out=runs/a"});
  CHECK(c.optimizer == OptimizerKind::SpectralGD);
  CHECK(c.hp.learning_rate == 0.005);
  CHECK(c.data.spectrum == Vector{3.0, 1.0});
  CHECK(c.model.hidden == 7);
  CHECK(c.out == "runs/a");
  CHECK(parse_config("{}", {"optimizer.kind=gd"}).optimizer == OptimizerKind::GD);
  CHECK(error_of("{}", {"model.hiden=3"}).find("hiden") != std::string::npos);
  CHECK_FALSE(error_of("{}", {"no_equals_sign"}).empty());
}

TEST_CASE("fingerprint identifies config and seed but not the output directory") {
  const auto a = parse_config(R"({"seed":1})");
  const auto b = parse_config(R"({"seed":1,"out":"elsewhere"})");
  const auto c = parse_config(R"({"seed":2})");
  CHECK(config_fingerprint(a) == config_fingerprint(b));
  CHECK(config_fingerprint(a) != config_fingerprint(c));
  CHECK(config_fingerprint(a).size() == 16);
  CHECK(config_fingerprint(a) == config_fingerprint(parse_config(serialize_config(a))));
  CHECK(serialize_config(b, false).find("elsewhere") == std::string::npos);
}
