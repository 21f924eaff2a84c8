#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qtune/config.hpp"
#include "qtune/eu_plane.hpp"
#include "qtune/stats.hpp"
#include "qtune/token_prune.hpp"

namespace qtune {

struct PruneDecision {
  std::string sample_id;
  bool kept = false;
  Quadrant quadrant = Quadrant::kNA;
  bool augmented = false;
  double weight = 1.0;
  std::optional<TokenMask> mask;  // present iff kept
};

inline constexpr std::size_t kQuadrantLabels = 6;

struct BatchReport {
  std::size_t batch_index = 0;
  std::size_t batch_size = 0;
  std::optional<Thresholds> thresholds;  // qtuning only
  std::array<std::size_t, kQuadrantLabels> quadrant_counts{};  // by Quadrant
  std::size_t kept = 0;
  std::size_t augmented = 0;
  std::size_t token_bits_kept = 0;   // over kept samples
  std::size_t token_bits_total = 0;  // over kept samples
  std::size_t warnings = 0;          // empty budgets + samples without eligible tokens
  std::int64_t wall_micros = 0;
};

struct BatchOutput {
  std::vector<PruneDecision> decisions;
  BatchReport report;
};

/// Stage one (sample pruner) then stage two (token pruner on kept samples).
/// Decisions are emitted in input order. Errors carry the batch index.
BatchOutput process_batch(std::span<const SampleStat> batch,
                          const EngineConfig& config,
                          std::size_t batch_index = 0);

enum class Execution { kSerial, kParallel };

/// Processes independent batches. kSerial is the reference path; kParallel
/// fans out over OpenMP threads and must agree with it bit for bit (apart
/// from wall_micros).
std::vector<BatchOutput> process_batches(
    std::span<const std::vector<SampleStat>> batches,
    const EngineConfig& config, std::size_t first_index,
    Execution exec = Execution::kSerial);

struct StreamSummary {
  std::size_t batches = 0;
  std::size_t samples = 0;
  std::size_t kept = 0;
  std::size_t augmented = 0;
  std::array<std::size_t, kQuadrantLabels> quadrant_counts{};
  std::size_t token_bits_kept = 0;
  std::size_t token_bits_total = 0;
  std::size_t warnings = 0;
  std::size_t tokens_read = 0;

  void add(const BatchReport& r);
};

struct StreamOptions {
  Execution exec = Execution::kSerial;
  /// Batches buffered per parse/process/write round.
  std::size_t window_batches = 256;
};

/// Reads JSON Lines records, chunks them into batch_size batches (the last
/// may be partial) and writes decision and report lines. Either sink may be
/// null. A sink failure throws kSinkFailure naming the last durable batch.
StreamSummary run_stream(std::istream& input, const EngineConfig& config,
                         std::ostream* decisions, std::ostream* reports,
                         StreamOptions opts = {});

}  // namespace qtune
