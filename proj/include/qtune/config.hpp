#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "qtune/eu_plane.hpp"
#include "qtune/token_prune.hpp"

namespace qtune {

struct EngineConfig {
  double r_sample = 0.5;
  double r_token = 0.5;
  double lambda = 0.5;
  std::size_t batch_size = 8;
  SamplePolicy sample_policy = SamplePolicy::kQTuning;
  TokenPolicy token_policy = TokenPolicy::kQTuningStrict;
  Eligibility eligibility = Eligibility::kTrainable;
  double percentile = 0.5;
  int k_max = 20;
  std::uint64_t seed = 0;

  bool operator==(const EngineConfig&) const = default;

  MaskOptions mask_options() const;
};

/// Throws Error(kConfig) naming the first out-of-range field.
void validate(const EngineConfig& config);

nlohmann::json to_json(const EngineConfig& config);

/// Keys absent from `j` keep the value already in `config`.
void merge_json(EngineConfig& config, const nlohmann::json& j);

EngineConfig config_from_json(const nlohmann::json& j);

EngineConfig load_config_file(const std::string& path);

}  // namespace qtune
