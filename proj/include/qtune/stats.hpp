#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qtune {

/// Per-position statistics under the current model, in nats.
struct TokenStat {
  double nll = 0.0;
  double entropy = 0.0;
  std::optional<double> ref_nll;
  bool trainable = true;
  bool prompt = false;
};

/// A sample and its coordinates on the error/uncertainty plane.
struct SampleStat {
  std::string sample_id;
  std::vector<TokenStat> tokens;
  double ppl = 1.0;
  double ent = 0.0;

  std::size_t length() const { return tokens.size(); }
};

/// exp(mean nll over trainable positions). Throws kNoTrainablePositions.
double sample_perplexity(std::span<const TokenStat> tokens);

/// Mean entropy over trainable positions. Throws kNoTrainablePositions.
double sample_entropy(std::span<const TokenStat> tokens);

/// exp(nll); strictly monotone in nll, so rankings match nll rankings.
inline double token_perplexity(const TokenStat& stat) {
  return std::exp(stat.nll);
}

/// Builds a SampleStat with ppl/ent derived from `tokens`.
SampleStat make_sample(std::string id, std::vector<TokenStat> tokens);

/// Recomputes ppl/ent in place after token statistics change.
void refresh_derived(SampleStat& sample);

/// floor(ratio * n), with a 1e-9 slack so that products such as 0.29 * 100
/// are not truncated one short by representation error.
std::size_t keep_budget(double ratio, std::size_t n);

}  // namespace qtune
