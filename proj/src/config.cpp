#include "qtune/config.hpp"

#include <fstream>

#include "qtune/error.hpp"

namespace qtune {

MaskOptions EngineConfig::mask_options() const {
  MaskOptions o;
  o.r_token = r_token;
  o.lambda = lambda;
  o.mode = token_policy == TokenPolicy::kQTuningGated ? MaskMode::kGated
                                                      : MaskMode::kStrictBudget;
  o.eligibility = eligibility;
  o.percentile = percentile;
  return o;
}

void validate(const EngineConfig& c) {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kConfig, msg);
  };
  if (!(c.r_sample > 0.0 && c.r_sample <= 1.0)) fail("r_sample must be in (0, 1]");
  if (!(c.r_token > 0.0 && c.r_token <= 1.0)) fail("r_token must be in (0, 1]");
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) fail("lambda must be in [0, 1]");
  if (c.batch_size == 0) fail("batch_size must be positive");
  if (!(c.percentile > 0.0 && c.percentile < 1.0)) {
    fail("percentile must be in (0, 1)");
  }
  if (c.k_max <= 0) fail("k_max must be positive");
}

nlohmann::json to_json(const EngineConfig& c) {
  return {
      {"r_sample", c.r_sample},
      {"r_token", c.r_token},
      {"lambda", c.lambda},
      {"batch_size", c.batch_size},
      {"sample_policy", sample_policy_name(c.sample_policy)},
      {"token_policy", token_policy_name(c.token_policy)},
      {"eligibility", eligibility_name(c.eligibility)},
      {"percentile", c.percentile},
      {"k_max", c.k_max},
      {"seed", c.seed},
  };
}

void merge_json(EngineConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "r_sample") c.r_sample = value.get<double>();
      else if (key == "r_token") c.r_token = value.get<double>();
      else if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "sample_policy") c.sample_policy = parse_sample_policy(value.get<std::string>());
      else if (key == "token_policy") c.token_policy = parse_token_policy(value.get<std::string>());
      else if (key == "eligibility") c.eligibility = parse_eligibility(value.get<std::string>());
      else if (key == "percentile") c.percentile = value.get<double>();
      else if (key == "k_max") c.k_max = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad config value: ") + e.what());
  }
}

EngineConfig config_from_json(const nlohmann::json& j) {
  EngineConfig c;
  merge_json(c, j);
  validate(c);
  return c;
}

EngineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace qtune
