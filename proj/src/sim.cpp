#include "qtune/sim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>

#include "qtune/error.hpp"
#include "qtune/record_io.hpp"
#include "qtune/rng.hpp"

namespace qtune {

const char* cluster_name(Cluster c) {
  switch (c) {
    case Cluster::kQ1: return "Q1";
    case Cluster::kQ2: return "Q2";
    case Cluster::kQ3: return "Q3";
    case Cluster::kQ4: return "Q4";
    case Cluster::kMid: return "MID";
  }
  return "MID";
}

namespace {

Cluster parse_cluster(const std::string& name) {
  for (std::size_t c = 0; c < kClusterCount; ++c) {
    if (name == cluster_name(static_cast<Cluster>(c))) {
      return static_cast<Cluster>(c);
    }
  }
  throw Error(ErrorCode::kConfig, "unknown cluster '" + name + "'");
}

[[noreturn]] void bad_spec(const std::string& msg) {
  throw Error(ErrorCode::kConfig, msg);
}

}  // namespace

void validate(const PopulationSpec& s) {
  if (s.n_samples == 0) throw Error(ErrorCode::kEmptyPopulation, "empty population");
  if (s.tokens_min == 0 || s.tokens_min > s.tokens_max) {
    bad_spec("tokens_per_sample range invalid");
  }
  if (s.prompt_tokens >= s.tokens_min) {
    bad_spec("prompt_tokens must leave at least one trainable token");
  }
  double total = 0.0;
  for (double w : s.weights) {
    if (!(w >= 0.0)) bad_spec("cluster weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) bad_spec("cluster weights must sum to 1");
  for (const auto& c : s.clusters) {
    if (!(c.nll_spread >= 0.0 && c.ent_spread >= 0.0)) {
      bad_spec("cluster spreads must be non-negative");
    }
  }
  if (s.noise && s.noise->count > s.tokens_min - s.prompt_tokens) {
    bad_spec("noise count exceeds trainable positions");
  }
}

void validate(const DynamicsSpec& d) {
  if (d.steps == 0) bad_spec("steps must be positive");
  if (!(d.eta >= 0.0 && d.eta < 1.0)) bad_spec("eta must be in [0, 1)");
  if (!(d.kappa >= 0.0 && d.kappa <= 1.0)) bad_spec("kappa must be in [0, 1]");
  if (!(d.entropy_floor >= 0.0)) bad_spec("entropy_floor must be non-negative");
  if (d.seeds.empty()) bad_spec("at least one seed required");
}

nlohmann::json to_json(const PopulationSpec& s) {
  nlohmann::json clusters = nlohmann::json::object();
  nlohmann::json weights = nlohmann::json::object();
  for (std::size_t c = 0; c < kClusterCount; ++c) {
    const auto& p = s.clusters[c];
    const char* name = cluster_name(static_cast<Cluster>(c));
    weights[name] = s.weights[c];
    clusters[name] = {{"nll_mean", p.nll_mean},
                      {"nll_spread", p.nll_spread},
                      {"ent_mean", p.ent_mean},
                      {"ent_spread", p.ent_spread}};
  }
  nlohmann::json j = {
      {"n_samples", s.n_samples},
      {"tokens_per_sample", {{"min", s.tokens_min}, {"max", s.tokens_max}}},
      {"prompt_tokens", s.prompt_tokens},
      {"weights", weights},
      {"clusters", clusters},
      {"ref_nll_mean", s.ref_nll_mean},
      {"ref_nll_spread", s.ref_nll_spread},
      {"seed", s.seed},
  };
  if (s.noise) {
    j["noise_injection"] = {{"count", s.noise->count},
                            {"nll", s.noise->nll},
                            {"target", cluster_name(s.noise->target)}};
  } else {
    j["noise_injection"] = nullptr;
  }
  return j;
}

nlohmann::json to_json(const DynamicsSpec& d) {
  return {{"steps", d.steps},
          {"eta", d.eta},
          {"kappa", d.kappa},
          {"entropy_floor", d.entropy_floor},
          {"seeds", d.seeds}};
}

PopulationSpec population_spec_from_json(const nlohmann::json& j) {
  PopulationSpec s;
  try {
    s.n_samples = j.value("n_samples", s.n_samples);
    if (auto t = j.find("tokens_per_sample"); t != j.end()) {
      if (t->is_number()) {
        s.tokens_min = s.tokens_max = t->get<std::size_t>();
      } else {
        s.tokens_min = t->at("min").get<std::size_t>();
        s.tokens_max = t->at("max").get<std::size_t>();
      }
    }
    s.prompt_tokens = j.value("prompt_tokens", s.prompt_tokens);
    if (auto w = j.find("weights"); w != j.end()) {
      s.weights.fill(0.0);
      for (const auto& [name, value] : w->items()) {
        s.weights[static_cast<std::size_t>(parse_cluster(name))] = value.get<double>();
      }
    }
    if (auto c = j.find("clusters"); c != j.end()) {
      for (const auto& [name, value] : c->items()) {
        auto& p = s.clusters[static_cast<std::size_t>(parse_cluster(name))];
        p.nll_mean = value.value("nll_mean", p.nll_mean);
        p.nll_spread = value.value("nll_spread", p.nll_spread);
        p.ent_mean = value.value("ent_mean", p.ent_mean);
        p.ent_spread = value.value("ent_spread", p.ent_spread);
      }
    }
    if (auto n = j.find("noise_injection"); n != j.end() && !n->is_null()) {
      NoiseInjection ni;
      ni.count = n->value("count", ni.count);
      ni.nll = n->value("nll", ni.nll);
      ni.target = parse_cluster(n->value("target", std::string("Q2")));
      s.noise = ni;
    }
    s.ref_nll_mean = j.value("ref_nll_mean", s.ref_nll_mean);
    s.ref_nll_spread = j.value("ref_nll_spread", s.ref_nll_spread);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    bad_spec(std::string("population spec: ") + e.what());
  }
  validate(s);
  return s;
}

DynamicsSpec dynamics_spec_from_json(const nlohmann::json& j) {
  DynamicsSpec d;
  try {
    d.steps = j.value("steps", d.steps);
    d.eta = j.value("eta", d.eta);
    d.kappa = j.value("kappa", d.kappa);
    d.entropy_floor = j.value("entropy_floor", d.entropy_floor);
    if (j.contains("seeds")) d.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    bad_spec(std::string("dynamics spec: ") + e.what());
  }
  validate(d);
  return d;
}

Population generate_population(const PopulationSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  Population pop;
  pop.samples.reserve(spec.n_samples);
  pop.clusters.reserve(spec.n_samples);
  pop.planted.resize(spec.n_samples);

  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t c = 0;
    for (; c + 1 < kClusterCount; ++c) {
      acc += spec.weights[c];
      if (u < acc) break;
    }
    // Skip trailing zero-weight clusters that the loop may have landed on.
    while (spec.weights[c] == 0.0 && c > 0) --c;
    const ClusterParams& p = spec.clusters[c];

    const std::size_t len =
        spec.tokens_min + rng.below(spec.tokens_max - spec.tokens_min + 1);
    std::vector<TokenStat> tokens(len);
    for (std::size_t k = 0; k < len; ++k) {
      TokenStat& t = tokens[k];
      t.prompt = k < spec.prompt_tokens;
      t.trainable = !t.prompt;
      t.nll = std::max(0.0, rng.normal(p.nll_mean, p.nll_spread));
      t.entropy = std::max(0.0, rng.normal(p.ent_mean, p.ent_spread));
      t.ref_nll = std::max(0.0, rng.normal(spec.ref_nll_mean, spec.ref_nll_spread));
    }
    if (spec.noise && spec.noise->target == static_cast<Cluster>(c)) {
      const std::size_t trainable = len - spec.prompt_tokens;
      auto picks = sample_without_replacement(rng, trainable, spec.noise->count);
      std::sort(picks.begin(), picks.end());
      for (auto& k : picks) {
        k += spec.prompt_tokens;
        tokens[k].nll = spec.noise->nll;
      }
      pop.planted[i] = std::move(picks);
    }

    std::string id = std::to_string(i);
    id = "s" + std::string(id.size() < 6 ? 6 - id.size() : 0, '0') + id;
    pop.samples.push_back(make_sample(std::move(id), std::move(tokens)));
    pop.clusters.push_back(static_cast<Cluster>(c));
  }
  return pop;
}

void write_population(const Population& pop, std::ostream& out) {
  for (const auto& s : pop.samples) out << format_record(s) << '\n';
}

std::string policy_label(const EngineConfig& config) {
  return std::string(sample_policy_name(config.sample_policy)) + ":" +
         token_policy_name(config.token_policy);
}

namespace {

void decay_token(TokenStat& t, double rate, double entropy_floor) {
  t.nll *= 1.0 - rate;
  // The floor stops decay; it never lifts a value that started below it.
  t.entropy = std::max(std::min(t.entropy, entropy_floor), (1.0 - rate) * t.entropy);
}

void record_step(std::vector<TrajectoryRow>& rows, const std::string& label,
                 std::uint64_t seed, std::size_t step,
                 const std::vector<SampleStat>& samples) {
  double ppl = 0.0, ent = 0.0;
  for (const auto& s : samples) {
    ppl += s.ppl;
    ent += s.ent;
  }
  const auto n = static_cast<double>(samples.size());
  rows.push_back({label, seed, step, ppl / n, ent / n});
}

std::vector<TrajectoryRow> simulate_seed(const PopulationSpec& pop_spec,
                                         const DynamicsSpec& dyn,
                                         EngineConfig config,
                                         std::uint64_t seed) {
  PopulationSpec spec = pop_spec;
  spec.seed = seed;
  config.seed = seed;
  std::vector<SampleStat> samples = generate_population(spec).samples;
  const std::string label = policy_label(config);
  const double eta = dyn.eta;
  const double coupled = dyn.kappa * dyn.eta;

  std::vector<TrajectoryRow> rows;
  record_step(rows, label, seed, 0, samples);
  Rng shuffle_rng(derive_seed(seed, std::uint64_t{0xD1CE}));
  std::vector<std::size_t> order(samples.size());

  for (std::size_t step = 1; step <= dyn.steps; ++step) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<SampleStat> batch;
      batch.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) batch.push_back(samples[order[k]]);
      const auto out = process_batch(batch, config, start / config.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        SampleStat& s = samples[order[k]];
        const PruneDecision& d = out.decisions[k - start];
        for (std::size_t t = 0; t < s.tokens.size(); ++t) {
          const bool trained = d.kept && d.mask->kept[t] != 0;
          decay_token(s.tokens[t], trained ? eta : coupled, dyn.entropy_floor);
        }
        refresh_derived(s);
      }
    }
    record_step(rows, label, seed, step, samples);
  }
  return rows;
}

}  // namespace

std::vector<TrajectoryRow> simulate_training(const PopulationSpec& pop,
                                             const DynamicsSpec& dyn,
                                             const EngineConfig& config,
                                             Execution exec) {
  validate(pop);
  validate(dyn);
  validate(config);
  const auto count = static_cast<std::ptrdiff_t>(dyn.seeds.size());
  std::vector<std::vector<TrajectoryRow>> per_seed(dyn.seeds.size());
  if (exec == Execution::kSerial) {
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      per_seed[i] = simulate_seed(pop, dyn, config, dyn.seeds[i]);
    }
  } else {
    std::vector<std::exception_ptr> errors(dyn.seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      try {
        per_seed[i] = simulate_seed(pop, dyn, config, dyn.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  std::vector<TrajectoryRow> rows;
  for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows,
                          std::ostream& out, bool header) {
  if (header) out << "policy,seed,step,mean_ppl,mean_ent\n";
  for (const auto& r : rows) {
    out << r.policy << ',' << r.seed << ',' << r.step << ','
        << format_double(r.mean_ppl) << ',' << format_double(r.mean_ent) << '\n';
  }
}

}  // namespace qtune
