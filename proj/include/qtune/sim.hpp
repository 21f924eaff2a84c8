#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qtune/config.hpp"
#include "qtune/pipeline.hpp"
#include "qtune/stats.hpp"

namespace qtune {

/// Synthetic cluster archetypes on the error/uncertainty plane.
enum class Cluster : std::uint8_t { kQ1, kQ2, kQ3, kQ4, kMid };
inline constexpr std::size_t kClusterCount = 5;

const char* cluster_name(Cluster c);

struct ClusterParams {
  double nll_mean = 1.0;
  double nll_spread = 0.15;
  double ent_mean = 1.0;
  double ent_spread = 0.15;
};

struct NoiseInjection {
  std::size_t count = 3;
  double nll = 10.0;
  Cluster target = Cluster::kQ2;
};

struct PopulationSpec {
  std::size_t n_samples = 256;
  std::size_t tokens_min = 16;
  std::size_t tokens_max = 48;
  /// Leading positions flagged prompt (and not trainable).
  std::size_t prompt_tokens = 0;
  std::array<double, kClusterCount> weights{0.10, 0.40, 0.15, 0.20, 0.15};
  std::array<ClusterParams, kClusterCount> clusters{{
      {2.5, 0.15, 2.0, 0.15},  // Q1-like: harmful noise
      {2.5, 0.15, 0.3, 0.15},  // Q2-like: valuable misconception
      {0.3, 0.15, 0.3, 0.15},  // Q3-like: redundant knowledge
      {0.3, 0.15, 2.0, 0.15},  // Q4-like: calibration data
      {1.2, 0.15, 1.2, 0.15},  // MID-like
  }};
  std::optional<NoiseInjection> noise;
  double ref_nll_mean = 1.0;
  double ref_nll_spread = 0.3;
  std::uint64_t seed = 0;
};

struct DynamicsSpec {
  std::size_t steps = 30;
  double eta = 0.1;
  double kappa = 0.1;
  double entropy_floor = 0.01;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

void validate(const PopulationSpec& spec);
void validate(const DynamicsSpec& spec);

nlohmann::json to_json(const PopulationSpec& spec);
nlohmann::json to_json(const DynamicsSpec& spec);
PopulationSpec population_spec_from_json(const nlohmann::json& j);
DynamicsSpec dynamics_spec_from_json(const nlohmann::json& j);

struct Population {
  std::vector<SampleStat> samples;
  std::vector<Cluster> clusters;
  /// Planted noise positions per sample (empty when none).
  std::vector<std::vector<std::size_t>> planted;
};

/// Deterministic given spec.seed. Throws kEmptyPopulation for n_samples = 0.
Population generate_population(const PopulationSpec& spec);

void write_population(const Population& pop, std::ostream& out);

struct TrajectoryRow {
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t step = 0;
  double mean_ppl = 0.0;
  double mean_ent = 0.0;
};

/// "<sample_policy>:<token_policy>".
std::string policy_label(const EngineConfig& config);

/// Multi-epoch decay dynamics. For each seed a population is generated with
/// that seed; every step shuffles it into batches, runs process_batch, then
/// decays selected tokens by eta and everything else by kappa * eta. Rows
/// cover steps 0..steps per seed, seeds in input order.
std::vector<TrajectoryRow> simulate_training(const PopulationSpec& pop,
                                             const DynamicsSpec& dyn,
                                             const EngineConfig& config,
                                             Execution exec = Execution::kSerial);

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows,
                          std::ostream& out, bool header = true);

}  // namespace qtune
