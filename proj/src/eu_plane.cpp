#include "qtune/eu_plane.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qtune/error.hpp"
#include "qtune/rng.hpp"

namespace qtune {

const char* quadrant_name(Quadrant q) {
  switch (q) {
    case Quadrant::kQ1: return "Q1";
    case Quadrant::kQ2: return "Q2";
    case Quadrant::kQ3: return "Q3";
    case Quadrant::kQ4: return "Q4";
    case Quadrant::kMid: return "MID";
    case Quadrant::kNA: return "NA";
  }
  return "NA";
}

std::size_t quantile_index(std::size_t n, double gamma) {
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "quantile of empty sequence");
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "quantile level outside [0, 1]");
  }
  // The slack keeps products such as 0.015 * 200 from rounding up a rank.
  const double rank = std::ceil(gamma * static_cast<double>(n) - 1e-9);
  if (rank <= 1.0) return 0;
  return std::min(static_cast<std::size_t>(rank) - 1, n - 1);
}

double quantile(std::span<const double> values, double gamma) {
  const std::size_t k = quantile_index(values.size(), gamma);
  std::vector<double> scratch(values.begin(), values.end());
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<long>(k),
                   scratch.end());
  return scratch[k];
}

Quadrant label_point(double ppl, double ent, const Thresholds& t) {
  const bool high_err = ppl >= t.ppl_hi;
  const bool low_err = ppl <= t.ppl_lo;
  const bool high_unc = ent >= t.ent_hi;
  const bool low_unc = ent <= t.ent_lo;
  if (high_err && low_unc) return Quadrant::kQ2;
  if (low_err && high_unc) return Quadrant::kQ4;
  if (high_err && high_unc) return Quadrant::kQ1;
  if (low_err && low_unc) return Quadrant::kQ3;
  return Quadrant::kMid;
}

namespace {

// Both axes sorted once; bisection re-reads quantiles from here.
struct SortedAxes {
  std::vector<double> ppl;
  std::vector<double> ent;

  explicit SortedAxes(std::span<const SampleStat> batch) {
    if (batch.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
    ppl.reserve(batch.size());
    ent.reserve(batch.size());
    for (const auto& s : batch) {
      ppl.push_back(s.ppl);
      ent.push_back(s.ent);
    }
    std::sort(ppl.begin(), ppl.end());
    std::sort(ent.begin(), ent.end());
  }
};

void check_offset(double v, const char* name) {
  if (!(v >= 0.0 && v <= kOffsetCeiling)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(name) + " outside [0, 0.49]");
  }
}

QuadrantAssignment classify_sorted(std::span<const SampleStat> batch,
                                   const SortedAxes& axes, double alpha,
                                   double beta) {
  const std::size_t n = batch.size();
  QuadrantAssignment out;
  Thresholds& t = out.thresholds;
  t.alpha = alpha;
  t.beta = beta;
  t.ppl_hi = axes.ppl[quantile_index(n, 1.0 - alpha)];
  t.ppl_lo = axes.ppl[quantile_index(n, alpha)];
  t.ent_hi = axes.ent[quantile_index(n, 1.0 - beta)];
  t.ent_lo = axes.ent[quantile_index(n, beta)];

  out.labels.resize(n);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Quadrant q = label_point(batch[i].ppl, batch[i].ent, t);
    out.labels[i] = q;
    kept += (q == Quadrant::kQ2 || q == Quadrant::kQ4) ? 1 : 0;
  }
  out.kept_fraction = static_cast<double>(kept) / static_cast<double>(n);
  return out;
}

}  // namespace

QuadrantAssignment classify(std::span<const SampleStat> batch, double alpha,
                            double beta) {
  check_offset(alpha, "alpha");
  check_offset(beta, "beta");
  const SortedAxes axes(batch);
  return classify_sorted(batch, axes, alpha, beta);
}

BisectionResult bisect_thresholds(std::span<const SampleStat> batch,
                                  double r_sample, BisectOptions opts) {
  const SortedAxes axes(batch);
  const double tol =
      opts.tol > 0.0 ? opts.tol : 0.25 / static_cast<double>(batch.size());

  BisectionResult best;
  double best_err = 0.0;
  // Returns the kept fraction at (a, b), retaining the closest visit.
  auto visit = [&](double a, double b) {
    auto assignment = classify_sorted(batch, axes, a, b);
    const double r = assignment.kept_fraction;
    const double err = std::abs(r - r_sample);
    ++best.evaluations;
    if (best.evaluations == 1 || err < best_err ||
        (err == best_err && a < best.alpha)) {
      best_err = err;
      best.alpha = a;
      best.beta = b;
      best.assignment = std::move(assignment);
    }
    return r;
  };

  // The kept fraction is non-decreasing along the schedule, so the ceiling
  // bounds everything the loop could reach.
  if (visit(kOffsetCeiling, kOffsetCeiling) < r_sample || best_err <= tol) {
    return best;
  }

  double a_lo = 0.0, a_hi = kOffsetCeiling;
  double b_lo = 0.0, b_hi = kOffsetCeiling;
  for (int k = 0; k < opts.k_max; ++k) {
    const double a = 0.5 * (a_lo + a_hi);
    const double b = 0.5 * (b_lo + b_hi);
    const double r = visit(a, b);
    if (r < r_sample) {
      a_lo = a;
      b_lo = b;
    } else {
      a_hi = a;
      b_hi = b;
    }
    if (std::abs(r - r_sample) <= tol) return best;
  }

  // Quantile indices only change at multiples of 1/n, and the kept fraction
  // at such a point can differ from both open neighbourhoods. Midpoints almost
  // never land on one, so the lattice points left in the bracket are visited.
  const auto n = static_cast<double>(batch.size());
  for (double k = std::ceil(a_lo * n); k / n <= a_hi; k += 1.0) {
    if (k / n > a_lo) visit(k / n, k / n);  // alpha == beta on this schedule
  }
  return best;
}

std::vector<double> supp_scores(std::span<const SampleStat> batch) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  auto [pmin, pmax] = std::minmax_element(
      batch.begin(), batch.end(),
      [](const SampleStat& a, const SampleStat& b) { return a.ppl < b.ppl; });
  auto [emin, emax] = std::minmax_element(
      batch.begin(), batch.end(),
      [](const SampleStat& a, const SampleStat& b) { return a.ent < b.ent; });
  const double p0 = pmin->ppl, prange = pmax->ppl - pmin->ppl;
  const double e0 = emin->ent, erange = emax->ent - emin->ent;

  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double p = prange > 0.0 ? (batch[i].ppl - p0) / prange : 0.0;
    const double e = erange > 0.0 ? (batch[i].ent - e0) / erange : 0.0;
    out[i] = std::max(p - e, e - p);
  }
  return out;
}

StageOneResult select_samples(std::span<const SampleStat> batch,
                              double r_sample, BisectOptions opts) {
  if (!(r_sample > 0.0 && r_sample <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "r_sample outside (0, 1]");
  }
  StageOneResult out;
  out.assignment = bisect_thresholds(batch, r_sample, opts).assignment;
  out.supp = supp_scores(batch);

  const std::size_t budget = keep_budget(r_sample, batch.size());
  if (budget == 0) {
    out.empty_budget = true;
    return out;
  }

  std::vector<std::size_t> retained;
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Quadrant q = out.assignment.labels[i];
    if (q == Quadrant::kQ2 || q == Quadrant::kQ4) {
      retained.push_back(i);
    } else {
      pool.push_back(i);
    }
  }

  // Secondary keys: lower ppl first, then id, then batch position.
  auto secondary_less = [&](std::size_t a, std::size_t b) {
    if (batch[a].ppl != batch[b].ppl) return batch[a].ppl < batch[b].ppl;
    if (batch[a].sample_id != batch[b].sample_id) {
      return batch[a].sample_id < batch[b].sample_id;
    }
    return a < b;
  };

  if (retained.size() < budget) {
    std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
      if (out.supp[a] != out.supp[b]) return out.supp[a] > out.supp[b];
      return secondary_less(a, b);
    });
    pool.resize(budget - retained.size());
    std::sort(pool.begin(), pool.end());
    out.augmented = pool;
    retained.insert(retained.end(), pool.begin(), pool.end());
    std::sort(retained.begin(), retained.end());
  } else if (retained.size() > budget) {
    std::sort(retained.begin(), retained.end(),
              [&](std::size_t a, std::size_t b) {
                if (out.supp[a] != out.supp[b]) return out.supp[a] < out.supp[b];
                return secondary_less(a, b);
              });
    retained.erase(retained.begin(),
                   retained.begin() +
                       static_cast<long>(retained.size() - budget));
    std::sort(retained.begin(), retained.end());
  }
  out.retained = std::move(retained);
  return out;
}

const char* sample_policy_name(SamplePolicy p) {
  switch (p) {
    case SamplePolicy::kQTuning: return "qtuning";
    case SamplePolicy::kRandom: return "random";
    case SamplePolicy::kLongest: return "longest";
    case SamplePolicy::kEntropy: return "entropy";
    case SamplePolicy::kInfoBatch: return "infobatch";
  }
  return "qtuning";
}

SamplePolicy parse_sample_policy(std::string_view name) {
  for (auto p : {SamplePolicy::kQTuning, SamplePolicy::kRandom,
                 SamplePolicy::kLongest, SamplePolicy::kEntropy,
                 SamplePolicy::kInfoBatch}) {
    if (name == sample_policy_name(p)) return p;
  }
  throw Error(ErrorCode::kConfig,
              "unknown sample policy '" + std::string(name) + "'");
}

SampleSelection baseline_sample_prune(std::span<const SampleStat> batch,
                                      SamplePolicy policy, double r_sample,
                                      std::uint64_t seed) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyInput, "empty batch");
  const std::size_t n = batch.size();
  const std::size_t budget = keep_budget(r_sample, n);
  SampleSelection out;
  out.weights.assign(n, 1.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto by_id = [&](std::size_t a, std::size_t b) {
    if (batch[a].sample_id != batch[b].sample_id) {
      return batch[a].sample_id < batch[b].sample_id;
    }
    return a < b;
  };

  switch (policy) {
    case SamplePolicy::kQTuning:
      throw Error(ErrorCode::kInvalidArgument,
                  "qtuning is not a baseline sample policy");
    case SamplePolicy::kRandom: {
      Rng rng(seed);
      out.kept = sample_without_replacement(rng, n, budget);
      break;
    }
    case SamplePolicy::kLongest:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         if (batch[a].length() != batch[b].length()) {
                           return batch[a].length() < batch[b].length();
                         }
                         return by_id(a, b);
                       });
      out.kept.assign(order.begin(), order.begin() + static_cast<long>(budget));
      break;
    case SamplePolicy::kEntropy:
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) {
                         if (batch[a].ent != batch[b].ent) {
                           return batch[a].ent > batch[b].ent;
                         }
                         return by_id(a, b);
                       });
      out.kept.assign(order.begin(), order.begin() + static_cast<long>(budget));
      break;
    case SamplePolicy::kInfoBatch: {
      // Soft-prune well-learned (below-mean ppl) samples at random and
      // rescale the survivors by the inverse of their keep probability.
      double mean = 0.0;
      for (const auto& s : batch) mean += s.ppl;
      mean /= static_cast<double>(n);
      std::vector<std::size_t> below, above;
      for (std::size_t i = 0; i < n; ++i) {
        (batch[i].ppl < mean ? below : above).push_back(i);
      }
      const std::size_t drop = n - budget;
      Rng rng(seed);
      std::vector<bool> keep(n, true);
      if (drop <= below.size()) {
        for (auto j : sample_without_replacement(rng, below.size(), drop)) {
          keep[below[j]] = false;
        }
        const std::size_t survivors = below.size() - drop;
        if (survivors > 0) {
          const double p = static_cast<double>(survivors) /
                           static_cast<double>(below.size());
          for (auto i : below) {
            if (keep[i]) out.weights[i] = 1.0 / p;
          }
        }
      } else {
        for (auto i : below) keep[i] = false;
        for (auto j : sample_without_replacement(rng, above.size(),
                                                 drop - below.size())) {
          keep[above[j]] = false;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (keep[i]) out.kept.push_back(i);
      }
      break;
    }
  }
  std::sort(out.kept.begin(), out.kept.end());
  return out;
}

}  // namespace qtune
