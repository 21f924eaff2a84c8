#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "qtune/error.hpp"
#include "qtune/stats.hpp"
#include "test_util.hpp"

namespace qtune {
namespace {

using testing::tok;
using testing::toks_from_nll;

TEST(SamplePerplexity, AllZeroNllIsOne) {
  EXPECT_DOUBLE_EQ(sample_perplexity(toks_from_nll({0, 0, 0})), 1.0);
}

TEST(SamplePerplexity, ConstantLnTwoIsTwo) {
  EXPECT_DOUBLE_EQ(sample_perplexity(toks_from_nll({std::log(2.0), std::log(2.0)})), 2.0);
}

TEST(SamplePerplexity, SkipsNonTrainablePositions) {
  // exp((0.1 + 1.3 + 0.4) / 3), 40-digit mpmath reference.
  std::vector<TokenStat> ts{tok(0.1), tok(0.7, 0.5, false), tok(1.3), tok(0.4)};
  EXPECT_NEAR(sample_perplexity(ts), 1.822118800390508974875, 1e-15);
}

TEST(SamplePerplexity, NoTrainablePositionsThrows) {
  std::vector<TokenStat> ts{tok(0.1, 0.1, false)};
  try {
    sample_perplexity(ts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoTrainablePositions);
    EXPECT_STREQ(e.what(), "no trainable positions");
  }
  EXPECT_THROW(sample_entropy(ts), Error);
}

TEST(SampleEntropy, Examples) {
  const double ln4 = std::log(4.0);
  EXPECT_NEAR(sample_entropy(std::vector<TokenStat>{tok(0, ln4), tok(1, ln4), tok(2, ln4)}), 1.3862943611198906, 1e-15);
  EXPECT_EQ(sample_entropy(std::vector<TokenStat>{tok(0, 0.0), tok(0, 0.0)}), 0.0);
  EXPECT_DOUBLE_EQ(sample_entropy(std::vector<TokenStat>{tok(0, 0.5), tok(0, 1.5), tok(0, 2.5, false)}), 1.0);
}

TEST(TokenPerplexity, Examples) {
  EXPECT_EQ(token_perplexity(tok(0.0)), 1.0);
  EXPECT_NEAR(token_perplexity(tok(std::log(10.0))), 10.0, 1e-12);
  EXPECT_NEAR(token_perplexity(tok(2.3)), 9.974182454814720740, 1e-13);
}

TEST(SamplePerplexity, InvariantToTrainableReordering) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<TokenStat> ts;
    for (int i = 0; i < 10; ++i) ts.push_back(tok(u(gen), u(gen), i % 3 != 0));
    const double base = sample_perplexity(ts);
    std::shuffle(ts.begin(), ts.end(), gen);
    EXPECT_NEAR(sample_perplexity(ts), base, 1e-12 * base);
  }
}

TEST(SamplePerplexity, SingleTrainableIsExpAndMonotone) {
  double prev = 0.0;
  for (double v = 0.0; v <= 8.0; v += 0.25) {
    std::vector<TokenStat> ts{tok(9.0, 0, false), tok(v), tok(3.0, 0, false)};
    const double p = sample_perplexity(ts);
    EXPECT_DOUBLE_EQ(p, std::exp(v));
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(MakeSample, DerivedFieldsAreRecomputable) {
  auto s = make_sample("x", {tok(0.2, 1.0), tok(0.9, 0.3, false), tok(1.4, 2.0)});
  EXPECT_EQ(s.ppl, sample_perplexity(s.tokens));
  EXPECT_EQ(s.ent, sample_entropy(s.tokens));
  EXPECT_EQ(s.length(), 3u);
}

TEST(KeepBudget, FloorsWithRepresentationSlack) {
  EXPECT_EQ(keep_budget(0.25, 8), 2u);
  EXPECT_EQ(keep_budget(0.29, 100), 29u);
  EXPECT_EQ(keep_budget(0.1, 3), 0u);
  EXPECT_EQ(keep_budget(1.0, 7), 7u);
  EXPECT_EQ(keep_budget(2.0 / 3.0, 3), 2u);
}

}  // namespace
}  // namespace qtune
