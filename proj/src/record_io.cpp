#include "qtune/record_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "qtune/error.hpp"

namespace qtune {
namespace {

using nlohmann::json;

[[noreturn]] void fail(ErrorCode code, std::size_t line_no,
                       const std::string& field, const std::string& where = {}) {
  std::string msg = "line " + std::to_string(line_no) + ": " +
                    error_code_name(code) + "(" + field + ")";
  if (!where.empty()) msg += " at " + where;
  throw Error(code, msg);
}

bool names_non_finite(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) s.erase(0, 1);
  return s == "nan" || s == "inf" || s == "infinity";
}

double read_stat(const json& tok, const char* key, std::size_t line_no,
                 const std::string& where, bool required) {
  auto it = tok.find(key);
  if (it == tok.end()) {
    if (required) fail(ErrorCode::kSchemaViolation, line_no, key, where);
    return std::nan("");
  }
  if (it->is_string()) {
    fail(names_non_finite(it->get<std::string>()) ? ErrorCode::kNonFinite
                                                  : ErrorCode::kSchemaViolation,
         line_no, key, where);
  }
  if (!it->is_number()) fail(ErrorCode::kSchemaViolation, line_no, key, where);
  const double v = it->get<double>();
  if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, line_no, key, where);
  if (v < 0.0) fail(ErrorCode::kNegativeValue, line_no, key, where);
  return v;
}

bool read_flag(const json& tok, const char* key, std::size_t line_no,
               const std::string& where) {
  auto it = tok.find(key);
  if (it == tok.end() || !it->is_boolean()) {
    fail(ErrorCode::kSchemaViolation, line_no, key, where);
  }
  return it->get<bool>();
}

}  // namespace

SampleStat parse_record(std::string_view line, std::size_t line_no) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kMalformedJson, line_no, "record");
  if (!j.is_object()) fail(ErrorCode::kSchemaViolation, line_no, "record");

  auto id = j.find("id");
  if (id == j.end() || !id->is_string()) {
    fail(ErrorCode::kSchemaViolation, line_no, "id");
  }
  auto meta = j.find("meta");
  if (meta != j.end() && !meta->is_object()) {
    fail(ErrorCode::kSchemaViolation, line_no, "meta");
  }
  auto toks = j.find("tokens");
  if (toks == j.end() || !toks->is_array()) {
    fail(ErrorCode::kSchemaViolation, line_no, "tokens");
  }
  if (toks->empty()) fail(ErrorCode::kEmptyTokens, line_no, "tokens");

  std::vector<TokenStat> tokens;
  tokens.reserve(toks->size());
  bool any_trainable = false;
  for (std::size_t i = 0; i < toks->size(); ++i) {
    const json& t = (*toks)[i];
    const std::string where = "tokens[" + std::to_string(i) + "]";
    if (!t.is_object()) fail(ErrorCode::kSchemaViolation, line_no, "token", where);
    TokenStat s;
    s.nll = read_stat(t, "nll", line_no, where, true);
    s.entropy = read_stat(t, "ent", line_no, where, true);
    const double ref = read_stat(t, "ref_nll", line_no, where, false);
    if (!std::isnan(ref)) s.ref_nll = ref;
    s.trainable = read_flag(t, "tr", line_no, where);
    s.prompt = read_flag(t, "pr", line_no, where);
    any_trainable = any_trainable || s.trainable;
    tokens.push_back(s);
  }
  if (!any_trainable) fail(ErrorCode::kNoTrainablePositions, line_no, "tr");
  return make_sample(id->get<std::string>(), std::move(tokens));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_record(const SampleStat& s) {
  std::string out = "{\"id\":" + json(s.sample_id).dump() + ",\"tokens\":[";
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const auto& t = s.tokens[i];
    if (i) out += ',';
    out += "{\"nll\":" + format_double(t.nll) +
           ",\"ent\":" + format_double(t.entropy) +
           ",\"tr\":" + (t.trainable ? "true" : "false") +
           ",\"pr\":" + (t.prompt ? "true" : "false");
    if (t.ref_nll) out += ",\"ref_nll\":" + format_double(*t.ref_nll);
    out += '}';
  }
  out += "]}";
  return out;
}

std::string format_decision(const PruneDecision& d) {
  std::string out = "{\"id\":" + json(d.sample_id).dump() +
                    ",\"kept\":" + (d.kept ? "true" : "false") +
                    ",\"quadrant\":\"" + quadrant_name(d.quadrant) +
                    "\",\"augmented\":" + (d.augmented ? "true" : "false") +
                    ",\"weight\":" + format_double(d.weight);
  if (d.mask) {
    out += ",\"mask\":[";
    for (std::size_t i = 0; i < d.mask->kept.size(); ++i) {
      if (i) out += ',';
      out += d.mask->kept[i] ? '1' : '0';
    }
    out += ']';
  }
  out += '}';
  return out;
}

PruneDecision parse_decision(std::string_view line, std::size_t line_no) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kMalformedJson, line_no, "decision");
  PruneDecision d;
  try {
    d.sample_id = j.at("id").get<std::string>();
    d.kept = j.at("kept").get<bool>();
    const auto q = j.at("quadrant").get<std::string>();
    d.quadrant = Quadrant::kNA;
    bool known = false;
    for (auto cand : {Quadrant::kQ1, Quadrant::kQ2, Quadrant::kQ3,
                      Quadrant::kQ4, Quadrant::kMid, Quadrant::kNA}) {
      if (q == quadrant_name(cand)) {
        d.quadrant = cand;
        known = true;
      }
    }
    if (!known) fail(ErrorCode::kSchemaViolation, line_no, "quadrant");
    d.augmented = j.at("augmented").get<bool>();
    d.weight = j.at("weight").get<double>();
    if (auto m = j.find("mask"); m != j.end()) {
      TokenMask mask;
      mask.sample_id = d.sample_id;
      for (const auto& bit : *m) {
        const int b = bit.get<int>();
        if (b != 0 && b != 1) fail(ErrorCode::kSchemaViolation, line_no, "mask");
        mask.kept.push_back(static_cast<std::uint8_t>(b));
      }
      d.mask = std::move(mask);
    }
  } catch (const json::exception&) {
    fail(ErrorCode::kSchemaViolation, line_no, "decision");
  }
  if (d.kept != d.mask.has_value()) {
    fail(ErrorCode::kSchemaViolation, line_no, "mask");
  }
  return d;
}

nlohmann::json report_to_json(const BatchReport& r) {
  json j;
  j["batch_index"] = r.batch_index;
  j["batch_size"] = r.batch_size;
  if (r.thresholds) {
    const auto& t = *r.thresholds;
    j["thresholds"] = {{"alpha", t.alpha},   {"beta", t.beta},
                       {"ppl_lo", t.ppl_lo}, {"ppl_hi", t.ppl_hi},
                       {"ent_lo", t.ent_lo}, {"ent_hi", t.ent_hi}};
  } else {
    j["thresholds"] = nullptr;
  }
  json counts = json::object();
  for (std::size_t q = 0; q < kQuadrantLabels; ++q) {
    counts[quadrant_name(static_cast<Quadrant>(q))] = r.quadrant_counts[q];
  }
  j["quadrants"] = counts;
  j["kept"] = r.kept;
  j["augmented"] = r.augmented;
  j["token_bits_kept"] = r.token_bits_kept;
  j["token_bits_total"] = r.token_bits_total;
  j["warnings"] = r.warnings;
  j["wall_micros"] = r.wall_micros;
  return j;
}

}  // namespace qtune
