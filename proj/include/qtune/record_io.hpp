#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "qtune/pipeline.hpp"
#include "qtune/stats.hpp"

namespace qtune {

/// Parses and validates one JSON Lines record:
///   {"id": str, "tokens": [{"nll", "ent", "tr", "pr", "ref_nll"?}], "meta"?}
/// Errors are tagged "line N: <code>(<field>)".
SampleStat parse_record(std::string_view line, std::size_t line_no = 0);

std::string format_record(const SampleStat& sample);

/// %.17g; round-trips every finite double.
std::string format_double(double v);

std::string format_decision(const PruneDecision& d);
PruneDecision parse_decision(std::string_view line, std::size_t line_no = 0);

nlohmann::json report_to_json(const BatchReport& r);

}  // namespace qtune
