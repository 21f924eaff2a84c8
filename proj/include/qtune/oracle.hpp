#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qtune/config.hpp"
#include "qtune/pipeline.hpp"
#include "qtune/stats.hpp"

// Brute-force verifiers. Everything here is written straight-line and shares
// no logic with the engine; only the record types and parser are common.
namespace qtune::oracle {

struct GridOptimum {
  double alpha = 0.0;
  double beta = 0.0;
  double kept_fraction = 0.0;
};

/// Exhaustive scan of alpha = beta over {0, step, 2 step, ..., 0.49}; the last
/// grid point is 0.49 itself. Ties go to the smaller alpha.
GridOptimum brute_force_thresholds(std::span<const SampleStat> batch,
                                   double r_sample, double grid_step);

/// Straight-line re-implementation of the full pipeline for deterministic
/// policies. Throws kInvalidArgument for random and infobatch policies.
std::vector<PruneDecision> reference_decisions(std::span<const SampleStat> records,
                                               const EngineConfig& config);

struct Verdict {
  bool pass = true;
  std::string code = "pass";
  std::string sample_id;
  std::optional<std::size_t> position;
  std::string detail;

  std::string describe() const;
};

/// Recomputes labels, budgets, scores and masks and reports the first
/// divergence. For random and infobatch policies only structural invariants
/// (budgets, mask shape, ineligible bits) are checked. Throws
/// kMisalignedStreams when the two streams do not pair up by sample_id.
Verdict verify_masks(std::span<const PruneDecision> decisions,
                     std::span<const SampleStat> records,
                     const EngineConfig& config);

}  // namespace qtune::oracle
