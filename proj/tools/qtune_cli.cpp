// qtune command-line front end: prune, stats, oracle, simulate, generate.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qtune/config.hpp"
#include "qtune/error.hpp"
#include "qtune/oracle.hpp"
#include "qtune/pipeline.hpp"
#include "qtune/record_io.hpp"
#include "qtune/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitMismatch = 2;

// Engine flags; only those given on the command line override the config.
struct EngineFlags {
  std::string config_path;
  double r_sample = 0, r_token = 0, lambda = 0, percentile = 0;
  std::size_t batch_size = 0;
  std::string sample_policy, token_policy, eligibility;
  int k_max = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<CLI::Option*, std::function<void(qtune::EngineConfig&)>>> setters;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON engine config file");
    auto add = [&](CLI::Option* opt, std::function<void(qtune::EngineConfig&)> f) {
      setters.emplace_back(opt, std::move(f));
    };
    add(app->add_option("--r-sample", r_sample, "sample keep ratio"),
        [this](auto& c) { c.r_sample = r_sample; });
    add(app->add_option("--r-token", r_token, "token keep ratio"),
        [this](auto& c) { c.r_token = r_token; });
    add(app->add_option("--lambda", lambda, "neighbour weight"),
        [this](auto& c) { c.lambda = lambda; });
    add(app->add_option("--batch-size", batch_size, "samples per batch"),
        [this](auto& c) { c.batch_size = batch_size; });
    add(app->add_option("--sample-policy", sample_policy,
                        "qtuning|random|longest|entropy|infobatch"),
        [this](auto& c) { c.sample_policy = qtune::parse_sample_policy(sample_policy); });
    add(app->add_option("--token-policy", token_policy,
                        "qtuning_strict|qtuning_gated|random|ppl|reversed_ppl|rho1|none"),
        [this](auto& c) { c.token_policy = qtune::parse_token_policy(token_policy); });
    add(app->add_option("--eligibility", eligibility, "trainable|prompt"),
        [this](auto& c) { c.eligibility = qtune::parse_eligibility(eligibility); });
    add(app->add_option("--percentile", percentile, "detrimental-token percentile"),
        [this](auto& c) { c.percentile = percentile; });
    add(app->add_option("--k-max", k_max, "bisection iterations"),
        [this](auto& c) { c.k_max = k_max; });
    add(app->add_option("--seed", seed, "global seed"),
        [this](auto& c) { c.seed = seed; });
  }

  qtune::EngineConfig resolve() const {
    qtune::EngineConfig c;
    std::string path = config_path;
    if (path.empty()) {
      if (const char* env = std::getenv("QTUNE_CONFIG")) path = env;
    }
    if (!path.empty()) c = qtune::load_config_file(path);
    for (const auto& [opt, set] : setters) {
      if (opt->count() > 0) set(c);
    }
    qtune::validate(c);
    return c;
  }
};

struct Input {
  std::ifstream file;
  std::istream* stream = &std::cin;

  explicit Input(const std::string& path) {
    if (path.empty() || path == "-") return;
    file.open(path);
    if (!file) throw qtune::Error(qtune::ErrorCode::kInvalidArgument, "cannot open " + path);
    stream = &file;
  }
};

struct Output {
  std::ofstream file;
  std::ostream* stream = &std::cout;

  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file.open(path);
    if (!file) throw qtune::Error(qtune::ErrorCode::kSinkFailure, "cannot open " + path);
    stream = &file;
  }
};

std::vector<qtune::SampleStat> read_records(std::istream& in) {
  std::vector<qtune::SampleStat> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(qtune::parse_record(line, line_no));
  }
  if (out.empty()) throw qtune::Error(qtune::ErrorCode::kEmptyInput, "input contains no records");
  return out;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qtune::Error(qtune::ErrorCode::kConfig, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw qtune::Error(qtune::ErrorCode::kConfig, path + ": " + e.what());
  }
}

int run_prune(const EngineFlags& flags, const std::string& input,
              const std::string& decisions, const std::string& report,
              bool parallel) {
  const auto config = flags.resolve();
  Input in(input);
  Output dec(decisions);
  std::unique_ptr<Output> rep;
  if (!report.empty()) rep = std::make_unique<Output>(report);
  qtune::StreamOptions opts;
  opts.exec = parallel ? qtune::Execution::kParallel : qtune::Execution::kSerial;
  const auto summary = qtune::run_stream(*in.stream, config, dec.stream,
                                         rep ? rep->stream : nullptr, opts);
  std::cerr << "batches=" << summary.batches << " samples=" << summary.samples
            << " kept=" << summary.kept << " augmented=" << summary.augmented
            << " token_bits=" << summary.token_bits_kept << "/"
            << summary.token_bits_total << " warnings=" << summary.warnings << '\n';
  return kExitOk;
}

int run_stats(const EngineFlags& flags, const std::string& input,
              const std::string& output, const std::string& census_path) {
  const auto config = flags.resolve();
  Input in(input);
  const auto records = read_records(*in.stream);
  Output out(output);
  std::array<std::size_t, qtune::kQuadrantLabels> census{};
  *out.stream << "batch,id,ppl,ent,quadrant\n";
  for (std::size_t start = 0, b = 0; start < records.size();
       start += config.batch_size, ++b) {
    const std::size_t len = std::min(config.batch_size, records.size() - start);
    const std::span<const qtune::SampleStat> batch(records.data() + start, len);
    qtune::BisectOptions bo;
    bo.k_max = config.k_max;
    const auto result = qtune::bisect_thresholds(batch, config.r_sample, bo);
    for (std::size_t i = 0; i < len; ++i) {
      const auto q = result.assignment.labels[i];
      ++census[static_cast<std::size_t>(q)];
      *out.stream << b << ',' << batch[i].sample_id << ','
                  << qtune::format_double(batch[i].ppl) << ','
                  << qtune::format_double(batch[i].ent) << ','
                  << qtune::quadrant_name(q) << '\n';
    }
  }
  std::unique_ptr<Output> cen;
  std::ostream* cs = &std::cerr;
  if (!census_path.empty()) {
    cen = std::make_unique<Output>(census_path);
    cs = cen->stream;
  }
  *cs << "quadrant,count\n";
  for (std::size_t q = 0; q < qtune::kQuadrantLabels; ++q) {
    *cs << qtune::quadrant_name(static_cast<qtune::Quadrant>(q)) << ','
        << census[q] << '\n';
  }
  return kExitOk;
}

int run_oracle(const EngineFlags& flags, const std::string& input,
               const std::string& decisions_path, const std::string& emit_reference,
               double grid_step) {
  const auto config = flags.resolve();
  std::vector<qtune::SampleStat> records;
  {
    Input in(input);
    records = read_records(*in.stream);
  }

  if (!emit_reference.empty()) {
    Output out(emit_reference);
    for (const auto& d : qtune::oracle::reference_decisions(records, config)) {
      *out.stream << qtune::format_decision(d) << '\n';
    }
    return kExitOk;
  }

  std::vector<qtune::PruneDecision> decisions;
  if (!decisions_path.empty()) {
    Input in(decisions_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(*in.stream, line)) {
      ++line_no;
      if (!line.empty()) decisions.push_back(qtune::parse_decision(line, line_no));
    }
  } else {
    for (std::size_t start = 0, b = 0; start < records.size();
         start += config.batch_size, ++b) {
      const std::size_t len = std::min(config.batch_size, records.size() - start);
      auto out = qtune::process_batch(
          std::span<const qtune::SampleStat>(records.data() + start, len), config, b);
      for (auto& d : out.decisions) decisions.push_back(std::move(d));
    }
  }

  int status = kExitOk;
  const auto verdict = qtune::oracle::verify_masks(decisions, records, config);
  std::cout << "verify_masks: " << verdict.describe() << '\n';
  if (!verdict.pass) status = kExitMismatch;

  if (config.sample_policy == qtune::SamplePolicy::kQTuning) {
    std::size_t worse = 0, batches = 0;
    for (std::size_t start = 0; start < records.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, records.size() - start);
      const std::span<const qtune::SampleStat> batch(records.data() + start, len);
      qtune::BisectOptions bo;
      bo.k_max = config.k_max;
      const double got =
          std::abs(qtune::bisect_thresholds(batch, config.r_sample, bo)
                       .assignment.kept_fraction - config.r_sample);
      const auto grid =
          qtune::oracle::brute_force_thresholds(batch, config.r_sample, grid_step);
      const double best = std::abs(grid.kept_fraction - config.r_sample);
      ++batches;
      if (got > best + 1.0 / static_cast<double>(len) + 1e-12) ++worse;
    }
    std::cout << "bisection vs grid: " << (batches - worse) << "/" << batches
              << " batches within one sample of the grid optimum\n";
    if (worse > 0) status = kExitMismatch;
  }
  return status;
}

int run_simulate(const EngineFlags& flags, const std::string& pop_path,
                 const std::string& dyn_path, const std::string& policies,
                 const std::string& out_csv, bool parallel) {
  const auto base = flags.resolve();
  const auto pop = pop_path.empty()
                       ? qtune::PopulationSpec{}
                       : qtune::population_spec_from_json(read_json_file(pop_path));
  const auto dyn = dyn_path.empty()
                       ? qtune::DynamicsSpec{}
                       : qtune::dynamics_spec_from_json(read_json_file(dyn_path));
  Output out(out_csv);
  bool header = true;
  std::stringstream list(policies);
  std::string item;
  while (std::getline(list, item, ',')) {
    if (item.empty()) continue;
    qtune::EngineConfig c = base;
    const auto colon = item.find(':');
    c.sample_policy = qtune::parse_sample_policy(item.substr(0, colon));
    if (colon != std::string::npos) {
      c.token_policy = qtune::parse_token_policy(item.substr(colon + 1));
    }
    const auto rows = qtune::simulate_training(
        pop, dyn, c, parallel ? qtune::Execution::kParallel : qtune::Execution::kSerial);
    qtune::write_trajectory_csv(rows, *out.stream, header);
    header = false;
  }
  return kExitOk;
}

int run_generate(const std::string& pop_path, const std::string& output,
                 std::int64_t seed) {
  auto spec = pop_path.empty()
                  ? qtune::PopulationSpec{}
                  : qtune::population_spec_from_json(read_json_file(pop_path));
  if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
  Output out(output);
  qtune::write_population(qtune::generate_population(spec), *out.stream);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qtune: dynamic sample and token pruning on the error/uncertainty plane"};
  app.require_subcommand(1);

  std::string input = "-", decisions = "-", report, output = "-", census;
  std::string pop_spec, dyn_spec, policies = "qtuning:qtuning_strict,random:random";
  std::string out_csv = "-", emit_reference;
  double grid_step = 0.001;
  bool parallel = false;
  std::int64_t gen_seed = -1;

  EngineFlags prune_flags, stats_flags, oracle_flags, sim_flags;

  auto* prune = app.add_subcommand("prune", "prune a JSON Lines record stream");
  prune->add_option("--input", input, "records (JSON Lines, '-' for stdin)");
  prune->add_option("--decisions", decisions, "decision output ('-' for stdout)");
  prune->add_option("--report", report, "per-batch report output");
  prune->add_flag("--parallel", parallel, "OpenMP batch processing");
  prune_flags.attach(prune);

  auto* stats = app.add_subcommand("stats", "EU-plane coordinates and quadrant census");
  stats->add_option("--input", input, "records");
  stats->add_option("--output", output, "coordinate CSV ('-' for stdout)");
  stats->add_option("--census", census, "census CSV (default: stderr)");
  stats_flags.attach(stats);

  auto* orc = app.add_subcommand("oracle", "run brute-force verifiers");
  orc->add_option("--input", input, "records");
  orc->add_option("--decisions", decisions, "decisions to verify (default: run the engine)");
  orc->add_option("--emit-reference", emit_reference,
                  "write reference-pipeline decisions instead of verifying");
  orc->add_option("--grid-step", grid_step, "threshold grid step");
  oracle_flags.attach(orc);

  auto* sim = app.add_subcommand("simulate", "synthetic training-dynamics simulation");
  sim->add_option("--pop-spec", pop_spec, "population spec JSON");
  sim->add_option("--dyn-spec", dyn_spec, "dynamics spec JSON");
  sim->add_option("--policies", policies,
                  "comma list of sample_policy:token_policy pairs");
  sim->add_option("--out-csv", out_csv, "trajectory CSV ('-' for stdout)");
  sim->add_flag("--parallel", parallel, "run seeds in parallel");
  sim_flags.attach(sim);

  auto* gen = app.add_subcommand("generate", "write a synthetic population as JSON Lines");
  gen->add_option("--pop-spec", pop_spec, "population spec JSON");
  gen->add_option("--output", output, "records output ('-' for stdout)");
  gen->add_option("--seed", gen_seed, "override the spec seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*prune) return run_prune(prune_flags, input, decisions, report, parallel);
    if (*stats) return run_stats(stats_flags, input, output, census);
    if (*orc) {
      const std::string dec = orc->get_option("--decisions")->count() ? decisions : "";
      return run_oracle(oracle_flags, input, dec, emit_reference, grid_step);
    }
    if (*sim) return run_simulate(sim_flags, pop_spec, dyn_spec, policies, out_csv, parallel);
    if (*gen) return run_generate(pop_spec, output, gen_seed);
  } catch (const qtune::Error& e) {
    std::cerr << "error [" << qtune::error_code_name(e.code()) << "]: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitMismatch;
  }
  return kExitOk;
}
