#include "qtune/pipeline.hpp"

#include <chrono>
#include <exception>
#include <istream>
#include <ostream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "qtune/error.hpp"
#include "qtune/record_io.hpp"
#include "qtune/rng.hpp"

namespace qtune {
namespace {

TokenMask prune_tokens(const SampleStat& sample, const EngineConfig& config) {
  switch (config.token_policy) {
    case TokenPolicy::kNone:
      return identity_mask(sample, TokenPolicy::kNone, config.eligibility);
    case TokenPolicy::kQTuningStrict:
    case TokenPolicy::kQTuningGated:
      return build_mask(sample, Quadrant::kQ2, config.mask_options());
    default:
      return baseline_token_prune(sample, config.token_policy, config.r_token,
                                  derive_seed(config.seed, sample.sample_id),
                                  config.eligibility);
  }
}

BatchOutput process_batch_impl(std::span<const SampleStat> batch,
                               const EngineConfig& config,
                               std::size_t batch_index) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = batch.size();
  BatchOutput out;
  BatchReport& rep = out.report;
  rep.batch_index = batch_index;
  rep.batch_size = n;

  std::vector<PruneDecision> decisions(n);
  for (std::size_t i = 0; i < n; ++i) decisions[i].sample_id = batch[i].sample_id;

  if (config.sample_policy == SamplePolicy::kQTuning) {
    BisectOptions bo;
    bo.k_max = config.k_max;
    const StageOneResult s1 = select_samples(batch, config.r_sample, bo);
    rep.thresholds = s1.assignment.thresholds;
    rep.warnings += s1.empty_budget ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      decisions[i].quadrant = s1.assignment.labels[i];
    }
    for (auto i : s1.retained) decisions[i].kept = true;
    for (auto i : s1.augmented) decisions[i].augmented = true;
    // Only Q2 is token-pruned; every other retained sample keeps all tokens.
    for (auto i : s1.retained) {
      auto& d = decisions[i];
      if (d.quadrant == Quadrant::kQ2) {
        d.mask = prune_tokens(batch[i], config);
      } else {
        d.mask = identity_mask(batch[i], config.token_policy, config.eligibility);
      }
    }
  } else {
    const SampleSelection sel = baseline_sample_prune(
        batch, config.sample_policy, config.r_sample,
        derive_seed(config.seed, static_cast<std::uint64_t>(batch_index)));
    for (std::size_t i = 0; i < n; ++i) decisions[i].weight = sel.weights[i];
    for (auto i : sel.kept) {
      decisions[i].kept = true;
      decisions[i].mask = prune_tokens(batch[i], config);
    }
  }

  for (auto& d : decisions) {
    ++rep.quadrant_counts[static_cast<std::size_t>(d.quadrant)];
    if (!d.kept) {
      d.weight = 1.0;
      continue;
    }
    ++rep.kept;
    rep.augmented += d.augmented ? 1 : 0;
    rep.token_bits_kept += d.mask->kept_count();
    rep.token_bits_total += d.mask->kept.size();
    rep.warnings += d.mask->no_eligible ? 1 : 0;
  }
  out.decisions = std::move(decisions);
  rep.wall_micros = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - start)
                        .count();
  return out;
}

[[noreturn]] void rethrow_with_batch(std::size_t batch_index) {
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(),
                "batch " + std::to_string(batch_index) + ": " + e.what());
  }
}

}  // namespace

BatchOutput process_batch(std::span<const SampleStat> batch,
                          const EngineConfig& config, std::size_t batch_index) {
  if (batch.empty()) {
    throw Error(ErrorCode::kEmptyInput,
                "batch " + std::to_string(batch_index) + ": empty batch");
  }
  try {
    return process_batch_impl(batch, config, batch_index);
  } catch (const Error&) {
    rethrow_with_batch(batch_index);
  }
}

std::vector<BatchOutput> process_batches(
    std::span<const std::vector<SampleStat>> batches,
    const EngineConfig& config, std::size_t first_index, Execution exec) {
  const auto count = static_cast<std::ptrdiff_t>(batches.size());
  std::vector<BatchOutput> out(batches.size());
  if (exec == Execution::kSerial) {
    for (std::ptrdiff_t b = 0; b < count; ++b) {
      out[b] = process_batch(batches[b], config, first_index + b);
    }
    return out;
  }

  std::vector<std::exception_ptr> errors(batches.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t b = 0; b < count; ++b) {
    try {
      out[b] = process_batch(batches[b], config, first_index + b);
    } catch (...) {
      errors[b] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void StreamSummary::add(const BatchReport& r) {
  ++batches;
  samples += r.batch_size;
  kept += r.kept;
  augmented += r.augmented;
  for (std::size_t q = 0; q < kQuadrantLabels; ++q) {
    quadrant_counts[q] += r.quadrant_counts[q];
  }
  token_bits_kept += r.token_bits_kept;
  token_bits_total += r.token_bits_total;
  warnings += r.warnings;
}

namespace {

struct RawLine {
  std::string text;
  std::size_t line_no;
};

std::vector<SampleStat> parse_lines(const std::vector<RawLine>& lines,
                                    Execution exec) {
  const auto count = static_cast<std::ptrdiff_t>(lines.size());
  std::vector<SampleStat> out(lines.size());
  if (exec == Execution::kSerial) {
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      out[i] = parse_record(lines[i].text, lines[i].line_no);
    }
    return out;
  }
  std::vector<std::exception_ptr> errors(lines.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      out[i] = parse_record(lines[i].text, lines[i].line_no);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

StreamSummary run_stream(std::istream& input, const EngineConfig& config,
                         std::ostream* decisions, std::ostream* reports,
                         StreamOptions opts) {
  validate(config);
  StreamSummary summary;
  const std::size_t window_records =
      config.batch_size * std::max<std::size_t>(opts.window_batches, 1);
  std::optional<std::size_t> last_durable;

  auto sink_failed = [&]() {
    throw Error(ErrorCode::kSinkFailure,
                "sink write failed; last durable batch index: " +
                    (last_durable ? std::to_string(*last_durable)
                                  : std::string("none")));
  };

  auto flush_window = [&](std::vector<RawLine>& lines) {
    if (lines.empty()) return;
    auto records = parse_lines(lines, opts.exec);
    lines.clear();
    for (const auto& r : records) summary.tokens_read += r.tokens.size();

    std::vector<std::vector<SampleStat>> batches;
    for (std::size_t i = 0; i < records.size(); i += config.batch_size) {
      const std::size_t end = std::min(records.size(), i + config.batch_size);
      batches.emplace_back(std::make_move_iterator(records.begin() + i),
                           std::make_move_iterator(records.begin() + end));
    }
    auto outputs =
        process_batches(batches, config, summary.batches, opts.exec);
    for (const auto& o : outputs) {
      if (decisions) {
        for (const auto& d : o.decisions) *decisions << format_decision(d) << '\n';
        decisions->flush();
        if (!*decisions) sink_failed();
      }
      if (reports) {
        *reports << report_to_json(o.report).dump() << '\n';
        reports->flush();
        if (!*reports) sink_failed();
      }
      summary.add(o.report);
      last_durable = o.report.batch_index;
    }
  };

  std::vector<RawLine> pending;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    pending.push_back({std::move(line), line_no});
    if (pending.size() == window_records) flush_window(pending);
  }
  flush_window(pending);

  if (summary.samples == 0) {
    throw Error(ErrorCode::kEmptyInput, "input contains no records");
  }
  return summary;
}

}  // namespace qtune
