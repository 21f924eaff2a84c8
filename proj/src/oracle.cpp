#include "qtune/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "qtune/error.hpp"

namespace qtune::oracle {
namespace {

struct Point {
  double ppl;
  double ent;
};

double naive_ppl(const SampleStat& s) {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : s.tokens) {
    if (t.trainable) {
      sum += t.nll;
      n += 1;
    }
  }
  return std::exp(sum / n);
}

double naive_ent(const SampleStat& s) {
  double sum = 0.0;
  int n = 0;
  for (const auto& t : s.tokens) {
    if (t.trainable) {
      sum += t.entropy;
      n += 1;
    }
  }
  return sum / n;
}

std::vector<Point> points_of(std::span<const SampleStat> batch) {
  std::vector<Point> pts;
  for (const auto& s : batch) pts.push_back({naive_ppl(s), naive_ent(s)});
  return pts;
}

double sorted_pick(std::vector<double> v, double gamma) {
  std::sort(v.begin(), v.end());
  const double rank = std::ceil(gamma * static_cast<double>(v.size()) - 1e-9);
  std::size_t idx = 0;
  if (rank > 1.0) idx = static_cast<std::size_t>(rank) - 1;
  if (idx >= v.size()) idx = v.size() - 1;
  return v[idx];
}

std::size_t naive_budget(double ratio, std::size_t n) {
  double raw = ratio * static_cast<double>(n) + 1e-9;
  std::size_t k = 0;
  while (static_cast<double>(k + 1) <= raw && k < n) ++k;
  return k;
}

struct Census {
  std::vector<Quadrant> labels;
  std::size_t kept = 0;
  double fraction = 0.0;
};

Census census_at(const std::vector<Point>& pts, double a, double b) {
  std::vector<double> ppl, ent;
  for (const auto& p : pts) {
    ppl.push_back(p.ppl);
    ent.push_back(p.ent);
  }
  const double ppl_hi = sorted_pick(ppl, 1.0 - a);
  const double ppl_lo = sorted_pick(ppl, a);
  const double ent_hi = sorted_pick(ent, 1.0 - b);
  const double ent_lo = sorted_pick(ent, b);
  Census c;
  for (const auto& p : pts) {
    Quadrant q = Quadrant::kMid;
    if (p.ppl >= ppl_hi && p.ent <= ent_lo) {
      q = Quadrant::kQ2;
    } else if (p.ppl <= ppl_lo && p.ent >= ent_hi) {
      q = Quadrant::kQ4;
    } else if (p.ppl >= ppl_hi && p.ent >= ent_hi) {
      q = Quadrant::kQ1;
    } else if (p.ppl <= ppl_lo && p.ent <= ent_lo) {
      q = Quadrant::kQ3;
    }
    if (q == Quadrant::kQ2 || q == Quadrant::kQ4) c.kept += 1;
    c.labels.push_back(q);
  }
  c.fraction = static_cast<double>(c.kept) / static_cast<double>(pts.size());
  return c;
}

// Mirrors the engine's documented schedule: ceiling first, then up to k_max
// coupled midpoints, keeping the closest visit (ties to the smaller alpha).
Census naive_bisect(const std::vector<Point>& pts, double target, int k_max) {
  const double tol = 0.25 / static_cast<double>(pts.size());
  Census best = census_at(pts, 0.49, 0.49);
  double best_alpha = 0.49;
  double best_err = std::abs(best.fraction - target);
  if (best.fraction < target || best_err <= tol) return best;

  double lo = 0.0, hi = 0.49;
  for (int k = 0; k < k_max; ++k) {
    const double mid = (lo + hi) / 2.0;
    Census c = census_at(pts, mid, mid);
    const double err = std::abs(c.fraction - target);
    if (err < best_err || (err == best_err && mid < best_alpha)) {
      best = c;
      best_err = err;
      best_alpha = mid;
    }
    if (c.fraction < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (err <= tol) return best;
  }
  const double n = static_cast<double>(pts.size());
  for (int k = 0; k <= static_cast<int>(pts.size()); ++k) {
    const double a = k / n;
    if (a <= lo || a > hi) continue;
    Census c = census_at(pts, a, a);
    const double err = std::abs(c.fraction - target);
    if (err < best_err || (err == best_err && a < best_alpha)) {
      best = c;
      best_err = err;
      best_alpha = a;
    }
  }
  return best;
}

std::vector<double> naive_supp(const std::vector<Point>& pts) {
  double pmin = pts[0].ppl, pmax = pts[0].ppl;
  double emin = pts[0].ent, emax = pts[0].ent;
  for (const auto& p : pts) {
    pmin = std::min(pmin, p.ppl);
    pmax = std::max(pmax, p.ppl);
    emin = std::min(emin, p.ent);
    emax = std::max(emax, p.ent);
  }
  std::vector<double> out;
  for (const auto& p : pts) {
    const double np = pmax > pmin ? (p.ppl - pmin) / (pmax - pmin) : 0.0;
    const double ne = emax > emin ? (p.ent - emin) / (emax - emin) : 0.0;
    out.push_back(std::fabs(np - ne));
  }
  return out;
}

std::vector<std::size_t> eligible_of(const SampleStat& s, Eligibility e) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const bool ok = e == Eligibility::kPrompt ? s.tokens[i].prompt
                                              : s.tokens[i].trainable;
    if (ok) pos.push_back(i);
  }
  return pos;
}

// Masks from a ranking key per eligible slot: smaller key is kept first,
// position breaks ties. `removable` limits which of the cut slots drop.
std::vector<std::uint8_t> mask_from_keys(const SampleStat& s,
                                         const std::vector<std::size_t>& pos,
                                         const std::vector<double>& keys,
                                         double r_token,
                                         const std::vector<bool>* removable) {
  std::vector<std::uint8_t> bits(s.tokens.size(), 1);
  if (pos.empty()) return bits;
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t j = 0; j < pos.size(); ++j) ranked.push_back({keys[j], j});
  std::sort(ranked.begin(), ranked.end());
  const std::size_t keep = std::max<std::size_t>(naive_budget(r_token, pos.size()), 1);
  for (std::size_t k = keep; k < ranked.size(); ++k) {
    const std::size_t j = ranked[k].second;
    if (removable == nullptr || (*removable)[j]) bits[pos[j]] = 0;
  }
  return bits;
}

std::vector<std::uint8_t> qtuning_mask(const SampleStat& s,
                                       const EngineConfig& cfg, bool gated) {
  const auto pos = eligible_of(s, cfg.eligibility);
  const std::size_t n = pos.size();
  std::vector<double> ppl;
  for (auto p : pos) ppl.push_back(std::exp(s.tokens[p].nll));
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i == 0 ? ppl[i] : ppl[i - 1];
    const double right = i + 1 == n ? ppl[i] : ppl[i + 1];
    score[i] = (1.0 - cfg.lambda) * ppl[i] + cfg.lambda * (left + right);
  }
  if (!gated) return mask_from_keys(s, pos, score, cfg.r_token, nullptr);

  std::vector<bool> flagged(n, false);
  if (n >= 2) {
    const double q = sorted_pick(ppl, cfg.percentile);
    for (std::size_t i = 0; i < n; ++i) {
      double nb;
      if (i == 0) {
        nb = ppl[1];
      } else if (i + 1 == n) {
        nb = ppl[i - 1];
      } else {
        nb = (ppl[i - 1] + ppl[i + 1]) / 2.0;
      }
      flagged[i] = ppl[i] > q && nb > q;
    }
  }
  return mask_from_keys(s, pos, score, cfg.r_token, &flagged);
}

bool deterministic_token_policy(TokenPolicy p) { return p != TokenPolicy::kRandom; }

bool deterministic_sample_policy(SamplePolicy p) {
  return p == SamplePolicy::kQTuning || p == SamplePolicy::kLongest ||
         p == SamplePolicy::kEntropy;
}

// Expected mask for a sample that the token pruner acts on.
std::vector<std::uint8_t> pruned_mask(const SampleStat& s,
                                      const EngineConfig& cfg) {
  const auto pos = eligible_of(s, cfg.eligibility);
  std::vector<double> keys;
  switch (cfg.token_policy) {
    case TokenPolicy::kNone:
      return std::vector<std::uint8_t>(s.tokens.size(), 1);
    case TokenPolicy::kQTuningStrict:
      return qtuning_mask(s, cfg, false);
    case TokenPolicy::kQTuningGated:
      return qtuning_mask(s, cfg, true);
    case TokenPolicy::kPpl:
      for (auto p : pos) keys.push_back(std::exp(s.tokens[p].nll));
      break;
    case TokenPolicy::kReversedPpl:
      for (auto p : pos) keys.push_back(-std::exp(s.tokens[p].nll));
      break;
    case TokenPolicy::kRho1:
      for (auto p : pos) {
        if (!s.tokens[p].ref_nll) {
          throw Error(ErrorCode::kReferenceRequired, "reference statistics required");
        }
        keys.push_back(-(s.tokens[p].nll - *s.tokens[p].ref_nll));
      }
      break;
    case TokenPolicy::kRandom:
      throw Error(ErrorCode::kInvalidArgument, "random token policy has no reference");
  }
  return mask_from_keys(s, pos, keys, cfg.r_token, nullptr);
}

struct BatchExpectation {
  std::vector<bool> kept;
  std::vector<bool> augmented;
  std::vector<Quadrant> labels;
};

BatchExpectation expect_samples(std::span<const SampleStat> batch,
                                const EngineConfig& cfg) {
  const std::size_t n = batch.size();
  const std::size_t budget = naive_budget(cfg.r_sample, n);
  BatchExpectation e;
  e.kept.assign(n, false);
  e.augmented.assign(n, false);
  e.labels.assign(n, Quadrant::kNA);

  if (cfg.sample_policy == SamplePolicy::kQTuning) {
    const auto pts = points_of(batch);
    const Census c = naive_bisect(pts, cfg.r_sample, cfg.k_max);
    const auto supp = naive_supp(pts);
    e.labels = c.labels;
    if (budget == 0) return e;
    using Key = std::tuple<double, double, std::string, std::size_t>;
    std::vector<Key> inside, outside;
    for (std::size_t i = 0; i < n; ++i) {
      const bool q24 = c.labels[i] == Quadrant::kQ2 || c.labels[i] == Quadrant::kQ4;
      if (q24) {
        inside.push_back({supp[i], pts[i].ppl, batch[i].sample_id, i});
      } else {
        outside.push_back({-supp[i], pts[i].ppl, batch[i].sample_id, i});
      }
    }
    std::sort(inside.begin(), inside.end());
    std::sort(outside.begin(), outside.end());
    if (inside.size() >= budget) {
      for (std::size_t k = inside.size() - budget; k < inside.size(); ++k) {
        e.kept[std::get<3>(inside[k])] = true;
      }
    } else {
      for (const auto& k : inside) e.kept[std::get<3>(k)] = true;
      for (std::size_t k = 0; k < budget - inside.size(); ++k) {
        e.kept[std::get<3>(outside[k])] = true;
        e.augmented[std::get<3>(outside[k])] = true;
      }
    }
    return e;
  }

  std::vector<std::tuple<double, std::string, std::size_t>> order;
  for (std::size_t i = 0; i < n; ++i) {
    const double key = cfg.sample_policy == SamplePolicy::kLongest
                           ? static_cast<double>(batch[i].tokens.size())
                           : -naive_ent(batch[i]);
    order.push_back({key, batch[i].sample_id, i});
  }
  std::sort(order.begin(), order.end());
  for (std::size_t k = 0; k < budget; ++k) e.kept[std::get<2>(order[k])] = true;
  return e;
}

bool acts_on(const EngineConfig& cfg, Quadrant q) {
  return cfg.sample_policy != SamplePolicy::kQTuning || q == Quadrant::kQ2;
}

Verdict fail(std::string code, const std::string& id,
             std::optional<std::size_t> pos, std::string detail) {
  Verdict v;
  v.pass = false;
  v.code = std::move(code);
  v.sample_id = id;
  v.position = pos;
  v.detail = std::move(detail);
  return v;
}

}  // namespace

std::string Verdict::describe() const {
  if (pass) return "pass";
  std::string s = code + ": sample '" + sample_id + "'";
  if (position) s += " position " + std::to_string(*position);
  if (!detail.empty()) s += " (" + detail + ")";
  return s;
}

GridOptimum brute_force_thresholds(std::span<const SampleStat> batch,
                                   double r_sample, double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 0.49)) {
    throw Error(ErrorCode::kInvalidArgument, "grid_step outside (0, 0.49]");
  }
  const auto pts = points_of(batch);
  GridOptimum best;
  double best_err = 2.0;
  for (std::size_t i = 0;; ++i) {
    double a = static_cast<double>(i) * grid_step;
    const bool last = a >= 0.49 - 1e-12;
    if (last) a = 0.49;
    const Census c = census_at(pts, a, a);
    const double err = std::abs(c.fraction - r_sample);
    if (err < best_err) {
      best_err = err;
      best = {a, a, c.fraction};
    }
    if (last) break;
  }
  return best;
}

std::vector<PruneDecision> reference_decisions(std::span<const SampleStat> records,
                                               const EngineConfig& cfg) {
  if (!deterministic_sample_policy(cfg.sample_policy) ||
      !deterministic_token_policy(cfg.token_policy)) {
    throw Error(ErrorCode::kInvalidArgument,
                "reference pipeline covers deterministic policies only");
  }
  std::vector<PruneDecision> out;
  for (std::size_t start = 0; start < records.size(); start += cfg.batch_size) {
    const std::size_t len = std::min(cfg.batch_size, records.size() - start);
    const auto batch = records.subspan(start, len);
    const auto e = expect_samples(batch, cfg);
    for (std::size_t i = 0; i < len; ++i) {
      PruneDecision d;
      d.sample_id = batch[i].sample_id;
      d.kept = e.kept[i];
      d.quadrant = e.labels[i];
      d.augmented = e.augmented[i];
      if (d.kept) {
        TokenMask m;
        m.sample_id = d.sample_id;
        m.kept = acts_on(cfg, d.quadrant)
                     ? pruned_mask(batch[i], cfg)
                     : std::vector<std::uint8_t>(batch[i].tokens.size(), 1);
        d.mask = std::move(m);
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

Verdict verify_masks(std::span<const PruneDecision> decisions,
                     std::span<const SampleStat> records,
                     const EngineConfig& cfg) {
  if (decisions.size() != records.size()) {
    throw Error(ErrorCode::kMisalignedStreams,
                "decision and record counts differ");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (decisions[i].sample_id != records[i].sample_id) {
      throw Error(ErrorCode::kMisalignedStreams,
                  "stream misaligned at index " + std::to_string(i));
    }
  }

  for (std::size_t start = 0; start < records.size(); start += cfg.batch_size) {
    const std::size_t len = std::min(cfg.batch_size, records.size() - start);
    const auto batch = records.subspan(start, len);
    const auto got = decisions.subspan(start, len);

    // Structure and budgets hold for every policy.
    std::size_t kept = 0;
    for (std::size_t i = 0; i < len; ++i) {
      const auto& d = got[i];
      const auto& s = batch[i];
      if (d.kept != d.mask.has_value()) {
        return fail("mask_presence", s.sample_id, std::nullopt, "kept iff mask");
      }
      if (!(d.weight > 0.0)) return fail("weight", s.sample_id, std::nullopt, "");
      if (!d.kept) continue;
      ++kept;
      const auto& bits = d.mask->kept;
      if (bits.size() != s.tokens.size()) {
        return fail("length_mismatch", s.sample_id, std::nullopt, "");
      }
      const auto pos = eligible_of(s, cfg.eligibility);
      std::vector<bool> is_eligible(bits.size(), false);
      for (auto p : pos) is_eligible[p] = true;
      std::size_t kept_eligible = 0;
      for (std::size_t t = 0; t < bits.size(); ++t) {
        if (!is_eligible[t] && bits[t] != 1) {
          return fail("mask_mismatch", s.sample_id, t, "ineligible position pruned");
        }
        if (is_eligible[t] && bits[t] == 1) ++kept_eligible;
      }
      if (cfg.token_policy != TokenPolicy::kNone &&
          cfg.token_policy != TokenPolicy::kQTuningGated && !pos.empty() &&
          acts_on(cfg, d.quadrant)) {
        const std::size_t want =
            std::max<std::size_t>(naive_budget(cfg.r_token, pos.size()), 1);
        if (kept_eligible != want) {
          if (cfg.token_policy == TokenPolicy::kQTuningStrict &&
              bits == qtuning_mask(s, cfg, true)) {
            return fail("mode_mismatch", s.sample_id, std::nullopt,
                        "mask matches gated mode");
          }
          return fail("budget_mismatch", s.sample_id, std::nullopt,
                      "kept " + std::to_string(kept_eligible) + " of " +
                          std::to_string(pos.size()) + ", expected " +
                          std::to_string(want));
        }
      }
    }
    const std::size_t budget = naive_budget(cfg.r_sample, len);
    if (kept != budget) {
      return fail("budget_mismatch", batch[0].sample_id, std::nullopt,
                  "batch kept " + std::to_string(kept) + ", expected " +
                      std::to_string(budget));
    }

    std::optional<BatchExpectation> expect;
    if (deterministic_sample_policy(cfg.sample_policy)) {
      expect = expect_samples(batch, cfg);
    }
    for (std::size_t i = 0; i < len; ++i) {
      const auto& d = got[i];
      const auto& s = batch[i];
      if (expect) {
        if (d.quadrant != expect->labels[i]) {
          return fail("quadrant_mismatch", s.sample_id, std::nullopt,
                      std::string("expected ") + quadrant_name(expect->labels[i]));
        }
        if (d.kept != expect->kept[i]) {
          return fail("kept_mismatch", s.sample_id, std::nullopt, "");
        }
        if (d.augmented != expect->augmented[i]) {
          return fail("augmented_mismatch", s.sample_id, std::nullopt, "");
        }
      }
      if (!d.kept || !deterministic_token_policy(cfg.token_policy)) continue;

      const auto want = acts_on(cfg, d.quadrant)
                            ? pruned_mask(s, cfg)
                            : std::vector<std::uint8_t>(s.tokens.size(), 1);
      const auto& bits = d.mask->kept;
      if (bits == want) continue;
      const bool qt = cfg.token_policy == TokenPolicy::kQTuningStrict ||
                      cfg.token_policy == TokenPolicy::kQTuningGated;
      if (qt && acts_on(cfg, d.quadrant) &&
          bits == qtuning_mask(s, cfg,
                               cfg.token_policy == TokenPolicy::kQTuningStrict)) {
        return fail("mode_mismatch", s.sample_id, std::nullopt,
                    "mask matches the other qtuning mode");
      }
      for (std::size_t t = 0; t < bits.size(); ++t) {
        if (bits[t] != want[t]) {
          return fail("mask_mismatch", s.sample_id, t,
                      "expected " + std::to_string(want[t]));
        }
      }
    }
  }
  return {};
}

}  // namespace qtune::oracle
