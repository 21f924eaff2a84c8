#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qtune/eu_plane.hpp"
#include "qtune/stats.hpp"

namespace qtune {

enum class Eligibility : std::uint8_t { kTrainable, kPrompt };

enum class MaskMode : std::uint8_t { kStrictBudget, kGated };

enum class TokenPolicy : std::uint8_t {
  kQTuningStrict,
  kQTuningGated,
  kRandom,
  kPpl,
  kReversedPpl,
  kRho1,
  kNone,
};

const char* eligibility_name(Eligibility e);
Eligibility parse_eligibility(std::string_view name);
const char* token_policy_name(TokenPolicy p);
TokenPolicy parse_token_policy(std::string_view name);

/// One bit per token of the sample; 1 means the token contributes to the loss.
struct TokenMask {
  std::string sample_id;
  std::vector<std::uint8_t> kept;
  TokenPolicy policy = TokenPolicy::kNone;
  std::size_t eligible_count = 0;
  bool no_eligible = false;

  std::size_t kept_count() const;
};

struct TokenScore {
  std::size_t position = 0;  // index into the full token sequence
  double ppl = 1.0;
  double score = 1.0;
  bool detrimental = false;
};

struct MaskOptions {
  double r_token = 1.0;
  double lambda = 0.5;
  MaskMode mode = MaskMode::kStrictBudget;
  Eligibility eligibility = Eligibility::kTrainable;
  double percentile = 0.5;
};

std::vector<std::size_t> eligible_positions(const SampleStat& sample,
                                            Eligibility eligibility);

/// s_i = (1 - lambda) * p_i + lambda * (p_{i-1} + p_{i+1}); a missing
/// neighbour at either end is replaced by p_i.
std::vector<double> smoothed_scores(std::span<const double> ppls,
                                    double lambda);

/// A position is detrimental when its own ppl and the mean of its existing
/// neighbours both strictly exceed the in-sample percentile. A lone token has
/// no neighbours and is never flagged.
std::vector<bool> detrimental_flags(std::span<const double> ppls,
                                    double percentile);

/// Scores over the eligible subsequence; adjacency skips ineligible tokens.
std::vector<TokenScore> score_tokens(const SampleStat& sample,
                                     const MaskOptions& opts);

TokenMask identity_mask(const SampleStat& sample, TokenPolicy label,
                        Eligibility eligibility);

/// Q2 samples are pruned; every other quadrant gets an identity mask.
TokenMask build_mask(const SampleStat& sample, Quadrant quadrant,
                     const MaskOptions& opts);

/// Baselines: random, ppl (keep lowest), reversed_ppl (keep highest), rho1
/// (keep largest nll - ref_nll). Keeps max(floor(r_token * eligible), 1).
TokenMask baseline_token_prune(const SampleStat& sample, TokenPolicy policy,
                               double r_token, std::uint64_t seed,
                               Eligibility eligibility = Eligibility::kTrainable);

}  // namespace qtune
