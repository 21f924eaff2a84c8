#include "qtune/stats.hpp"

#include <cmath>

#include "qtune/error.hpp"

namespace qtune {
namespace {

template <typename Field>
double trainable_mean(std::span<const TokenStat> tokens, Field field) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : tokens) {
    if (!t.trainable) continue;
    sum += field(t);
    ++count;
  }
  if (count == 0) {
    throw Error(ErrorCode::kNoTrainablePositions, "no trainable positions");
  }
  return sum / static_cast<double>(count);
}

}  // namespace

double sample_perplexity(std::span<const TokenStat> tokens) {
  return std::exp(
      trainable_mean(tokens, [](const TokenStat& t) { return t.nll; }));
}

double sample_entropy(std::span<const TokenStat> tokens) {
  return trainable_mean(tokens, [](const TokenStat& t) { return t.entropy; });
}

SampleStat make_sample(std::string id, std::vector<TokenStat> tokens) {
  SampleStat s{std::move(id), std::move(tokens)};
  refresh_derived(s);
  return s;
}

void refresh_derived(SampleStat& sample) {
  sample.ppl = sample_perplexity(sample.tokens);
  sample.ent = sample_entropy(sample.tokens);
}

std::size_t keep_budget(double ratio, std::size_t n) {
  const double raw = ratio * static_cast<double>(n);
  if (raw <= 0.0) return 0;
  auto k = static_cast<std::size_t>(std::floor(raw + 1e-9));
  return k > n ? n : k;
}

}  // namespace qtune
