#include "qtune/token_prune.hpp"

#include <algorithm>
#include <numeric>

#include "qtune/error.hpp"
#include "qtune/rng.hpp"

namespace qtune {

const char* eligibility_name(Eligibility e) {
  return e == Eligibility::kPrompt ? "prompt" : "trainable";
}

Eligibility parse_eligibility(std::string_view name) {
  if (name == "trainable") return Eligibility::kTrainable;
  if (name == "prompt") return Eligibility::kPrompt;
  throw Error(ErrorCode::kConfig,
              "unknown eligibility '" + std::string(name) + "'");
}

const char* token_policy_name(TokenPolicy p) {
  switch (p) {
    case TokenPolicy::kQTuningStrict: return "qtuning_strict";
    case TokenPolicy::kQTuningGated: return "qtuning_gated";
    case TokenPolicy::kRandom: return "random";
    case TokenPolicy::kPpl: return "ppl";
    case TokenPolicy::kReversedPpl: return "reversed_ppl";
    case TokenPolicy::kRho1: return "rho1";
    case TokenPolicy::kNone: return "none";
  }
  return "none";
}

TokenPolicy parse_token_policy(std::string_view name) {
  for (auto p : {TokenPolicy::kQTuningStrict, TokenPolicy::kQTuningGated,
                 TokenPolicy::kRandom, TokenPolicy::kPpl,
                 TokenPolicy::kReversedPpl, TokenPolicy::kRho1,
                 TokenPolicy::kNone}) {
    if (name == token_policy_name(p)) return p;
  }
  throw Error(ErrorCode::kConfig,
              "unknown token policy '" + std::string(name) + "'");
}

std::size_t TokenMask::kept_count() const {
  return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), 1));
}

std::vector<std::size_t> eligible_positions(const SampleStat& sample,
                                            Eligibility eligibility) {
  std::vector<std::size_t> out;
  out.reserve(sample.tokens.size());
  for (std::size_t i = 0; i < sample.tokens.size(); ++i) {
    const auto& t = sample.tokens[i];
    if (eligibility == Eligibility::kTrainable ? t.trainable : t.prompt) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<double> smoothed_scores(std::span<const double> ppls,
                                    double lambda) {
  const std::size_t n = ppls.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i > 0 ? ppls[i - 1] : ppls[i];
    const double right = i + 1 < n ? ppls[i + 1] : ppls[i];
    out[i] = (1.0 - lambda) * ppls[i] + lambda * (left + right);
  }
  return out;
}

std::vector<bool> detrimental_flags(std::span<const double> ppls,
                                    double percentile) {
  const std::size_t n = ppls.size();
  std::vector<bool> out(n, false);
  if (n < 2) return out;
  const double q = quantile(ppls, percentile);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    int count = 0;
    if (i > 0) {
      sum += ppls[i - 1];
      ++count;
    }
    if (i + 1 < n) {
      sum += ppls[i + 1];
      ++count;
    }
    out[i] = ppls[i] > q && sum / count > q;
  }
  return out;
}

std::vector<TokenScore> score_tokens(const SampleStat& sample,
                                     const MaskOptions& opts) {
  const auto positions = eligible_positions(sample, opts.eligibility);
  std::vector<double> ppls;
  ppls.reserve(positions.size());
  for (auto p : positions) ppls.push_back(token_perplexity(sample.tokens[p]));
  if (ppls.empty()) return {};

  const auto scores = smoothed_scores(ppls, opts.lambda);
  const auto flags = detrimental_flags(ppls, opts.percentile);
  std::vector<TokenScore> out(positions.size());
  for (std::size_t j = 0; j < positions.size(); ++j) {
    out[j] = {positions[j], ppls[j], scores[j], flags[j]};
  }
  return out;
}

TokenMask identity_mask(const SampleStat& sample, TokenPolicy label,
                        Eligibility eligibility) {
  TokenMask m;
  m.sample_id = sample.sample_id;
  m.kept.assign(sample.tokens.size(), 1);
  m.policy = label;
  m.eligible_count = eligible_positions(sample, eligibility).size();
  m.no_eligible = m.eligible_count == 0;
  return m;
}

namespace {

std::size_t token_budget(double r_token, std::size_t eligible) {
  return std::max<std::size_t>(keep_budget(r_token, eligible), 1);
}

void check_ratio(double r_token) {
  if (!(r_token > 0.0 && r_token <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "r_token outside (0, 1]");
  }
}

// Order of eligible slots, best-to-keep first; stable on position.
template <typename Less>
std::vector<std::size_t> rank_slots(std::size_t n, Less less) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

}  // namespace

TokenMask build_mask(const SampleStat& sample, Quadrant quadrant,
                     const MaskOptions& opts) {
  check_ratio(opts.r_token);
  const TokenPolicy label = opts.mode == MaskMode::kGated
                                ? TokenPolicy::kQTuningGated
                                : TokenPolicy::kQTuningStrict;
  TokenMask mask = identity_mask(sample, label, opts.eligibility);
  if (quadrant != Quadrant::kQ2 || mask.no_eligible) return mask;

  const auto scores = score_tokens(sample, opts);
  const std::size_t keep = token_budget(opts.r_token, scores.size());
  const auto order = rank_slots(scores.size(), [&](std::size_t a, std::size_t b) {
    return scores[a].score < scores[b].score;
  });
  for (std::size_t k = keep; k < order.size(); ++k) {
    const auto& s = scores[order[k]];
    if (opts.mode == MaskMode::kStrictBudget || s.detrimental) {
      mask.kept[s.position] = 0;
    }
  }
  return mask;
}

TokenMask baseline_token_prune(const SampleStat& sample, TokenPolicy policy,
                               double r_token, std::uint64_t seed,
                               Eligibility eligibility) {
  check_ratio(r_token);
  TokenMask mask = identity_mask(sample, policy, eligibility);
  if (policy == TokenPolicy::kNone || mask.no_eligible) return mask;

  const auto positions = eligible_positions(sample, eligibility);
  const std::size_t n = positions.size();
  const std::size_t keep = token_budget(r_token, n);
  auto tok = [&](std::size_t j) -> const TokenStat& {
    return sample.tokens[positions[j]];
  };

  std::vector<std::size_t> order;
  switch (policy) {
    case TokenPolicy::kRandom: {
      Rng rng(seed);
      order = sample_without_replacement(rng, n, n);
      break;
    }
    case TokenPolicy::kPpl:
      order = rank_slots(n, [&](std::size_t a, std::size_t b) {
        return token_perplexity(tok(a)) < token_perplexity(tok(b));
      });
      break;
    case TokenPolicy::kReversedPpl:
      order = rank_slots(n, [&](std::size_t a, std::size_t b) {
        return token_perplexity(tok(a)) > token_perplexity(tok(b));
      });
      break;
    case TokenPolicy::kRho1: {
      std::vector<double> excess(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (!tok(j).ref_nll) {
          throw Error(ErrorCode::kReferenceRequired,
                      "reference statistics required (sample '" +
                          sample.sample_id + "')");
        }
        excess[j] = tok(j).nll - *tok(j).ref_nll;
      }
      order = rank_slots(n, [&](std::size_t a, std::size_t b) {
        return excess[a] > excess[b];
      });
      break;
    }
    default:
      throw Error(ErrorCode::kInvalidArgument,
                  std::string("not a baseline token policy: ") +
                      token_policy_name(policy));
  }
  for (std::size_t k = keep; k < n; ++k) mask.kept[positions[order[k]]] = 0;
  return mask;
}

}  // namespace qtune
