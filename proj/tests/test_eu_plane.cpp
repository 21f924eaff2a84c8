#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "qtune/error.hpp"
#include "qtune/eu_plane.hpp"
#include "qtune/oracle.hpp"
#include "qtune/rng.hpp"
#include "test_util.hpp"

namespace qtune {
namespace {

using testing::point;
using testing::random_batch;

double sort_oracle(std::vector<double> v, double gamma) {
  std::sort(v.begin(), v.end());
  long idx = static_cast<long>(std::ceil(gamma * v.size() - 1e-9)) - 1;
  idx = std::clamp(idx, 0L, static_cast<long>(v.size()) - 1);
  return v[static_cast<std::size_t>(idx)];
}

TEST(Quantile, Examples) {
  const std::vector<double> v{4, 1, 3, 2};
  EXPECT_EQ(quantile(v, 0.5), 2.0);
  const std::vector<double> one{7};
  EXPECT_EQ(quantile(one, 0.0), 7.0);
  EXPECT_EQ(quantile(one, 1.0), 7.0);
  EXPECT_EQ(quantile(v, 0.0), 1.0);
  EXPECT_EQ(quantile(v, 1.0), 4.0);
}

TEST(Quantile, EmptyAndOutOfRangeThrow) {
  EXPECT_THROW(quantile(std::vector<double>{}, 0.5), Error);
  EXPECT_THROW(quantile(std::vector<double>{1.0}, 1.5), Error);
}

TEST(Quantile, MatchesSortOracle) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> v(1 + rep % 100);
    for (auto& x : v) x = u(gen);
    const double g = rep % 10 == 0 ? (rep % 20 == 0 ? 0.0 : 1.0) : u(gen);
    const double q = quantile(v, g);
    EXPECT_EQ(q, sort_oracle(v, g));
    EXPECT_NE(std::find(v.begin(), v.end(), q), v.end());
  }
  // 100 uniform draws at 0.37.
  std::vector<double> v(100);
  for (auto& x : v) x = u(gen);
  EXPECT_EQ(quantile(v, 0.37), sort_oracle(v, 0.37));
}

// Brute-force labels straight from the quadrant definitions.
Quadrant brute_label(double p, double e, double phi, double plo, double ehi, double elo) {
  std::vector<Quadrant> hits;
  if (p >= phi && e <= elo) hits.push_back(Quadrant::kQ2);
  if (p <= plo && e >= ehi) hits.push_back(Quadrant::kQ4);
  if (p >= phi && e >= ehi) hits.push_back(Quadrant::kQ1);
  if (p <= plo && e <= elo) hits.push_back(Quadrant::kQ3);
  return hits.empty() ? Quadrant::kMid : hits.front();
}

TEST(Classify, FourCorners) {
  std::vector<SampleStat> b{point("a", 10, 0.1), point("b", 10, 5),
                            point("c", 0.5, 5), point("d", 0.5, 0.1)};
  const auto qa = classify(b, 0.49, 0.49);
  const std::vector<Quadrant> want{Quadrant::kQ2, Quadrant::kQ1, Quadrant::kQ4, Quadrant::kQ3};
  EXPECT_EQ(qa.labels, want);
  const auto& t = qa.thresholds;
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(qa.labels[i], brute_label(b[i].ppl, b[i].ent, t.ppl_hi, t.ppl_lo, t.ent_hi, t.ent_lo));
  }
  EXPECT_DOUBLE_EQ(qa.kept_fraction, 0.5);
}

TEST(Classify, IdenticalPointsAllQ2) {
  std::vector<SampleStat> b(5, point("x", 3.0, 1.0));
  const auto qa = classify(b, 0.2, 0.3);
  for (auto q : qa.labels) EXPECT_EQ(q, Quadrant::kQ2);
  EXPECT_EQ(qa.kept_fraction, 1.0);
}

TEST(Classify, ZeroOffsetsUseAxisExtremes) {
  std::mt19937_64 gen(3);
  auto b = random_batch(gen, 30);
  const auto qa = classify(b, 0.0, 0.0);
  double pmin = 1e300, pmax = -1, emin = 1e300, emax = -1;
  for (const auto& s : b) {
    pmin = std::min(pmin, s.ppl);
    pmax = std::max(pmax, s.ppl);
    emin = std::min(emin, s.ent);
    emax = std::max(emax, s.ent);
  }
  EXPECT_EQ(qa.thresholds.ppl_lo, pmin);
  EXPECT_EQ(qa.thresholds.ppl_hi, pmax);
  EXPECT_EQ(qa.thresholds.ent_lo, emin);
  EXPECT_EQ(qa.thresholds.ent_hi, emax);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (qa.labels[i] == Quadrant::kMid) continue;
    const bool extreme = b[i].ppl == pmin || b[i].ppl == pmax;
    EXPECT_TRUE(extreme);
  }
}

TEST(Classify, RejectsOffsetsAboveCeiling) {
  std::vector<SampleStat> b{point("a", 1, 1)};
  EXPECT_THROW(classify(b, 0.5, 0.1), Error);
}

TEST(Classify, PartitionRecomputableFromThresholds) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 0.49);
  for (int rep = 0; rep < 200; ++rep) {
    auto b = random_batch(gen, 8 + rep % 50, rep % 3 - 1);
    const auto qa = classify(b, u(gen), u(gen));
    std::size_t kept = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto& t = qa.thresholds;
      EXPECT_EQ(qa.labels[i], label_point(b[i].ppl, b[i].ent, t));
      EXPECT_EQ(qa.labels[i], brute_label(b[i].ppl, b[i].ent, t.ppl_hi, t.ppl_lo, t.ent_hi, t.ent_lo));
      kept += qa.labels[i] == Quadrant::kQ2 || qa.labels[i] == Quadrant::kQ4;
    }
    EXPECT_EQ(qa.kept_fraction, static_cast<double>(kept) / b.size());
    EXPECT_LE(qa.thresholds.ppl_lo, qa.thresholds.ppl_hi);
    EXPECT_LE(qa.thresholds.ent_lo, qa.thresholds.ent_hi);
  }
}

TEST(Classify, KeptFractionMonotoneAlongSchedule) {
  std::mt19937_64 gen(21);
  for (int rep = 0; rep < 100; ++rep) {
    auto b = random_batch(gen, 8 + rep * 2, rep % 3 - 1);
    double prev = -1.0;
    for (int k = 0; k < 50; ++k) {
      const double a = 0.49 * k / 49.0;
      const double r = classify(b, a, a).kept_fraction;
      EXPECT_GE(r, prev) << "rep " << rep << " step " << k;
      prev = r;
    }
  }
}

TEST(Bisect, CeilingCaseReturnsTopOfInterval) {
  // Perfectly correlated axes: nothing is ever Q2 or Q4.
  std::vector<SampleStat> b;
  for (int i = 1; i <= 8; ++i) b.push_back(point("p" + std::to_string(i), i, i));
  const auto r = bisect_thresholds(b, 0.5);
  EXPECT_EQ(r.alpha, kOffsetCeiling);
  EXPECT_EQ(r.beta, kOffsetCeiling);
  EXPECT_EQ(r.assignment.kept_fraction, 0.0);
  const auto s = select_samples(b, 0.5);
  EXPECT_EQ(s.retained.size(), 4u);
  EXPECT_EQ(s.augmented.size(), 4u);
}

TEST(Bisect, NearGridOptimumOnRandomBatch) {
  std::mt19937_64 gen(200);
  auto b = random_batch(gen, 200, 0);
  const auto r = bisect_thresholds(b, 0.25);
  const auto grid = oracle::brute_force_thresholds(b, 0.25, 0.001);
  EXPECT_LE(std::abs(r.assignment.kept_fraction - 0.25),
            std::abs(grid.kept_fraction - 0.25) + 1.0 / 200 + 1e-12);
  EXPECT_LE(r.evaluations, 1 + 20 + 2);
}

TEST(Bisect, FullBudgetSaturates) {
  std::mt19937_64 gen(4);
  auto b = random_batch(gen, 16, 0);
  const auto s = select_samples(b, 1.0);
  EXPECT_EQ(s.retained.size(), 16u);
}

TEST(Bisect, IsDeterministic) {
  std::mt19937_64 gen(9);
  auto b = random_batch(gen, 64, 1);
  const auto a = bisect_thresholds(b, 0.125);
  const auto c = bisect_thresholds(b, 0.125);
  EXPECT_EQ(a.alpha, c.alpha);
  EXPECT_EQ(a.assignment.labels, c.assignment.labels);
}

TEST(SuppScores, Examples) {
  std::vector<SampleStat> b;
  const double ppl[] = {1, 2, 3, 4, 5}, ent[] = {5, 4, 3, 2, 1};
  for (int i = 0; i < 5; ++i) b.push_back(point("s" + std::to_string(i), ppl[i], ent[i]));
  const auto s = supp_scores(b);
  const double want[] = {1, 0.5, 0, 0.5, 1};
  for (int i = 0; i < 5; ++i) {
    // Independent recomputation from the min-max definition.
    const double p = (b[i].ppl - b[0].ppl) / (b[4].ppl - b[0].ppl);
    const double e = (b[i].ent - b[4].ent) / (b[0].ent - b[4].ent);
    EXPECT_NEAR(s[i], std::abs(p - e), 1e-12);
    EXPECT_NEAR(s[i], want[i], 1e-12);
  }
}

TEST(SuppScores, ConstantAxisNormalizesToZero) {
  std::vector<SampleStat> b{point("a", 2, 1), point("b", 2, 3)};
  const auto s = supp_scores(b);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 1.0);
}

TEST(SuppScores, InvariantUnderAffinePplRescale) {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 50; ++rep) {
    auto b = random_batch(gen, 20, 0);
    const auto before = supp_scores(b);
    for (auto& s : b) s.ppl = 3.5 * s.ppl + 7.0;
    const auto after = supp_scores(b);
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-12);
  }
}

// Two quadrant members (one Q2, one Q4) among eight, budget four.
std::vector<SampleStat> two_member_batch() {
  const double ent[] = {1, 2, 3, 5, 4, 6, 7, 8};
  std::vector<SampleStat> b;
  for (int i = 0; i < 8; ++i) b.push_back(point("m" + std::to_string(i), i + 1.0, ent[i] * 0.9 + 0.05 * i));
  return b;
}

TEST(SelectSamples, AugmentsWithHighestSuppNonMembers) {
  const auto b = two_member_batch();
  const auto s = select_samples(b, 0.5);
  std::set<std::size_t> members;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto q = s.assignment.labels[i];
    if (q == Quadrant::kQ2 || q == Quadrant::kQ4) members.insert(i);
  }
  ASSERT_EQ(members.size(), 2u);
  ASSERT_EQ(s.retained.size(), 4u);

  // Enumerate every size-4 superset; the winner maximizes the sorted supp
  // vector of its additions (lexicographically, ties toward lower ppl).
  const auto supp = supp_scores(b);
  std::vector<std::size_t> best;
  std::vector<std::pair<double, double>> best_key;
  for (unsigned mask = 0; mask < 256; ++mask) {
    if (__builtin_popcount(mask) != 4) continue;
    std::vector<std::size_t> set;
    bool ok = true;
    for (std::size_t m : members) ok = ok && (mask >> m & 1);
    if (!ok) continue;
    std::vector<std::pair<double, double>> key;
    for (std::size_t i = 0; i < 8; ++i) {
      if (mask >> i & 1) {
        set.push_back(i);
        if (!members.count(i)) key.push_back({-supp[i], b[i].ppl});
      }
    }
    std::sort(key.begin(), key.end());
    if (best.empty() || key < best_key) {
      best = set;
      best_key = key;
    }
  }
  EXPECT_EQ(s.retained, best);
  for (auto i : s.augmented) EXPECT_FALSE(members.count(i));
  EXPECT_EQ(s.augmented.size(), 2u);
}

TEST(SelectSamples, ExactBudgetNeedsNoCorrection) {
  std::vector<SampleStat> b{point("a", 10, 0.1), point("b", 10, 5),
                            point("c", 0.5, 5), point("d", 0.5, 0.1)};
  const auto s = select_samples(b, 0.5);
  EXPECT_EQ(s.retained, (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(s.augmented.empty());
}

TEST(SelectSamples, ZeroBudgetIsEmptyWithWarning) {
  std::vector<SampleStat> b{point("a", 1, 1), point("b", 2, 2), point("c", 3, 1)};
  const auto s = select_samples(b, 0.2);
  EXPECT_TRUE(s.retained.empty());
  EXPECT_TRUE(s.empty_budget);
}

TEST(SelectSamples, AlwaysHitsBudget) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    auto b = random_batch(gen, 1 + rep % 70, rep % 3 - 1);
    const double r = u(gen);
    const auto s = select_samples(b, r);
    EXPECT_EQ(s.retained.size(), keep_budget(r, b.size()));
    EXPECT_TRUE(std::is_sorted(s.retained.begin(), s.retained.end()));
    for (auto i : s.augmented) {
      EXPECT_NE(s.assignment.labels[i], Quadrant::kQ2);
      EXPECT_NE(s.assignment.labels[i], Quadrant::kQ4);
    }
  }
}

TEST(SelectSamples, TrimsLowestSuppWhenOverBudget) {
  // All identical: every sample is Q2, budget 2 of 5, supp all 0, so the
  // tie-breaks (ppl, then id) decide and the trim removes the lowest ids.
  std::vector<SampleStat> b;
  for (const char* id : {"e", "a", "d", "b", "c"}) b.push_back(point(id, 2, 1));
  const auto s = select_samples(b, 0.4);
  ASSERT_EQ(s.retained.size(), 2u);
  EXPECT_EQ(b[s.retained[0]].sample_id, "e");
  EXPECT_EQ(b[s.retained[1]].sample_id, "d");
}

std::vector<SampleStat> lengths_batch(const std::vector<int>& lens) {
  std::vector<SampleStat> b;
  for (std::size_t i = 0; i < lens.size(); ++i) {
    std::vector<TokenStat> ts(static_cast<std::size_t>(lens[i]), testing::tok(0.5));
    b.push_back(make_sample("L" + std::to_string(i), ts));
  }
  return b;
}

TEST(BaselineSamplePrune, LongestDropsLongest) {
  const auto b = lengths_batch({3, 9, 5, 7});
  const auto sel = baseline_sample_prune(b, SamplePolicy::kLongest, 0.5, 0);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{0, 2}));
}

TEST(BaselineSamplePrune, EntropyKeepsHighestWithIdTieBreak) {
  std::vector<SampleStat> b{point("w", 1, 0.1), point("x", 1, 0.9),
                            point("z", 1, 0.5), point("y", 1, 0.5)};
  const auto sel = baseline_sample_prune(b, SamplePolicy::kEntropy, 0.5, 0);
  EXPECT_EQ(sel.kept, (std::vector<std::size_t>{1, 3}));
}

TEST(BaselineSamplePrune, RandomReplaysPinnedGenerator) {
  std::mt19937_64 gen(77);
  auto b = random_batch(gen, 12);
  const auto sel = baseline_sample_prune(b, SamplePolicy::kRandom, 0.25, 1234);
  // Replay: mt19937_64 + Lemire bounded draws + partial Fisher-Yates.
  std::mt19937_64 eng(1234);
  std::vector<std::size_t> pool(12);
  for (std::size_t i = 0; i < 12; ++i) pool[i] = i;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::uint64_t bound = 12 - i;
    std::uint64_t x = eng();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    while (static_cast<std::uint64_t>(m) < (0 - bound) % bound) {
      x = eng();
      m = static_cast<__uint128_t>(x) * bound;
    }
    std::swap(pool[i], pool[i + static_cast<std::size_t>(m >> 64)]);
  }
  std::vector<std::size_t> want(pool.begin(), pool.begin() + 3);
  std::sort(want.begin(), want.end());
  EXPECT_EQ(sel.kept, want);
  EXPECT_EQ(baseline_sample_prune(b, SamplePolicy::kRandom, 0.25, 1234).kept, sel.kept);
}

TEST(BaselineSamplePrune, PinnedEngineOutput) {
  // The 10000th output of a default-seeded mt19937_64 is fixed by the standard.
  std::mt19937_64 eng;
  eng.discard(9999);
  EXPECT_EQ(eng(), 9981545732273789042ULL);
}

TEST(BaselineSamplePrune, InfoBatchReweightsBelowMeanSurvivors) {
  // ppl mean = 5.5; below-mean pool {1,2,3,4,5}; drop 2 of them.
  std::vector<SampleStat> b;
  for (int i = 1; i <= 10; ++i) b.push_back(point("i" + std::to_string(i), i, 1.0));
  const auto sel = baseline_sample_prune(b, SamplePolicy::kInfoBatch, 0.8, 99);
  ASSERT_EQ(sel.kept.size(), 8u);
  std::size_t dropped_below = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const bool kept = std::binary_search(sel.kept.begin(), sel.kept.end(), i);
    if (i >= 5) {
      EXPECT_TRUE(kept);
      EXPECT_EQ(sel.weights[i], 1.0);
    } else if (kept) {
      EXPECT_DOUBLE_EQ(sel.weights[i], 5.0 / 3.0);
    } else {
      ++dropped_below;
    }
  }
  EXPECT_EQ(dropped_below, 2u);
}

TEST(BaselineSamplePrune, InfoBatchSpillsIntoAboveMeanPool) {
  std::vector<SampleStat> b;
  for (int i = 1; i <= 4; ++i) b.push_back(point("i" + std::to_string(i), i, 1.0));
  const auto sel = baseline_sample_prune(b, SamplePolicy::kInfoBatch, 0.25, 5);
  ASSERT_EQ(sel.kept.size(), 1u);
  EXPECT_GE(sel.kept[0], 2u);
  for (double w : sel.weights) EXPECT_EQ(w, 1.0);
}

TEST(BaselineSamplePrune, EveryPolicyHitsBudget) {
  std::mt19937_64 gen(41);
  for (auto p : {SamplePolicy::kRandom, SamplePolicy::kLongest,
                 SamplePolicy::kEntropy, SamplePolicy::kInfoBatch}) {
    for (int rep = 0; rep < 50; ++rep) {
      auto b = random_batch(gen, 1 + rep);
      const auto sel = baseline_sample_prune(b, p, 0.3, rep);
      EXPECT_EQ(sel.kept.size(), keep_budget(0.3, b.size()));
    }
  }
  std::vector<SampleStat> b{point("a", 1, 1)};
  EXPECT_THROW(baseline_sample_prune(b, SamplePolicy::kQTuning, 0.5, 0), Error);
}

}  // namespace
}  // namespace qtune
