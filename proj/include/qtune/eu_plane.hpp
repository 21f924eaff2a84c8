#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "qtune/stats.hpp"

namespace qtune {

enum class Quadrant : std::uint8_t { kQ1, kQ2, kQ3, kQ4, kMid, kNA };

const char* quadrant_name(Quadrant q);

/// Upper end of the quantile-offset search interval for both axes.
inline constexpr double kOffsetCeiling = 0.49;

struct Thresholds {
  double alpha = 0.0;
  double beta = 0.0;
  double ppl_hi = 0.0;
  double ppl_lo = 0.0;
  double ent_hi = 0.0;
  double ent_lo = 0.0;
};

/// Labels are aligned with the batch order.
struct QuadrantAssignment {
  Thresholds thresholds;
  std::vector<Quadrant> labels;
  double kept_fraction = 0.0;
};

struct BisectionResult {
  double alpha = 0.0;
  double beta = 0.0;
  QuadrantAssignment assignment;
  int evaluations = 0;
};

struct BisectOptions {
  int k_max = 20;
  /// Non-positive selects the default of 0.25 / batch size.
  double tol = 0.0;
};

/// Sample indices refer to positions in the batch; both lists are ascending.
struct StageOneResult {
  QuadrantAssignment assignment;
  std::vector<std::size_t> retained;
  std::vector<std::size_t> augmented;
  std::vector<double> supp;
  bool empty_budget = false;
};

/// Smallest element q with at least ceil(gamma * n) values <= q, i.e. the
/// sorted element at index max(ceil(gamma * n) - 1, 0). gamma * n is taken
/// with a 1e-9 slack so representation error cannot bump the rank.
double quantile(std::span<const double> values, double gamma);

/// Index rule shared with quantile(); exposed for callers holding sorted data.
std::size_t quantile_index(std::size_t n, double gamma);

/// Labels one point against fixed thresholds. Precedence when several regions
/// match: Q2, Q4, Q1, Q3, then MID.
Quadrant label_point(double ppl, double ent, const Thresholds& t);

QuadrantAssignment classify(std::span<const SampleStat> batch, double alpha,
                            double beta);

/// Coupled bisection of (alpha, beta) on one midpoint schedule, driving the
/// Q2+Q4 fraction toward r_sample. The ceiling alpha = beta = 0.49 is
/// evaluated first; if even it keeps too few, it is returned directly. When
/// the loop ends without meeting tol, the multiples of 1/n inside the final
/// bracket are visited too. Returns the closest visit, ties to smaller alpha.
BisectionResult bisect_thresholds(std::span<const SampleStat> batch,
                                  double r_sample, BisectOptions opts = {});

/// |P - E| after per-batch min-max normalization of both axes (a constant
/// axis normalizes to 0).
std::vector<double> supp_scores(std::span<const SampleStat> batch);

/// Stage one: bisection, then supp-score augmentation or trimming so that
/// exactly floor(r_sample * n) samples are retained.
StageOneResult select_samples(std::span<const SampleStat> batch,
                              double r_sample, BisectOptions opts = {});

enum class SamplePolicy : std::uint8_t {
  kQTuning,
  kRandom,
  kLongest,
  kEntropy,
  kInfoBatch,
};

const char* sample_policy_name(SamplePolicy p);
SamplePolicy parse_sample_policy(std::string_view name);

struct SampleSelection {
  std::vector<std::size_t> kept;  // ascending batch indices
  std::vector<double> weights;    // one per batch sample, 1.0 unless reweighted
};

/// Baseline sample pruners. `policy` must not be kQTuning.
SampleSelection baseline_sample_prune(std::span<const SampleStat> batch,
                                      SamplePolicy policy, double r_sample,
                                      std::uint64_t seed);

}  // namespace qtune
