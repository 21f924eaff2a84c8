#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "qtune/stats.hpp"

namespace qtune::testing {

inline TokenStat tok(double nll, double ent = 0.5, bool trainable = true,
                     bool prompt = false) {
  TokenStat t;
  t.nll = nll;
  t.entropy = ent;
  t.trainable = trainable;
  t.prompt = prompt;
  return t;
}

inline std::vector<TokenStat> toks_from_nll(const std::vector<double>& nlls) {
  std::vector<TokenStat> out;
  for (double v : nlls) out.push_back(tok(v));
  return out;
}

/// A sample whose ppl/ent are set directly (tokens are a single placeholder
/// that reproduces them: nll = ln ppl, entropy = ent).
inline SampleStat point(std::string id, double ppl, double ent) {
  return make_sample(std::move(id), {tok(std::log(ppl), ent)});
}

/// Random batch; `corr` in {-1, 0, 1} selects anti-, un- or positively
/// correlated axes.
inline std::vector<SampleStat> random_batch(std::mt19937_64& gen, std::size_t n,
                                            int corr = 0) {
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::uniform_int_distribution<int> len(1, 12);
  std::vector<SampleStat> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double base = u(gen);
    std::vector<TokenStat> ts;
    const int L = len(gen);
    for (int k = 0; k < L; ++k) {
      double nll = base + 0.3 * u(gen);
      double ent = corr == 0 ? u(gen) : (corr > 0 ? base : 3.0 - base) + 0.3 * u(gen);
      TokenStat t = tok(nll, ent, k == 0 || u(gen) > 0.5, u(gen) > 2.0);
      t.ref_nll = u(gen);
      ts.push_back(t);
    }
    out.push_back(make_sample("id" + std::to_string(i), std::move(ts)));
  }
  return out;
}

}  // namespace qtune::testing
