#pragma once

// Entity-level scoring. Spans are grouped per sentence id; a span counts as a
// true positive only when matched one-to-one with a gold span of the same
// type. Strict mode needs identical boundaries; partial mode accepts any
// overlap of at least one token, resolving conflicts greedily by overlap.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "elucid/core.hpp"

namespace elucid::eval {

using SpanTable = std::map<std::string, std::vector<EntitySpan>>;

enum class MatchMode { Strict, Partial };
std::string to_string(MatchMode m);

struct TypeScore {
  std::string etype;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  MatchMode mode = MatchMode::Strict;
  std::vector<TypeScore> per_type;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::size_t sentences = 0;
  std::size_t gold_entities = 0;
  std::size_t pred_entities = 0;

  const TypeScore* find(const std::string& etype) const;
};

EvalReport strict_match(const SpanTable& gold, const SpanTable& pred, const LabelScheme& scheme);
EvalReport partial_match(const SpanTable& gold, const SpanTable& pred, const LabelScheme& scheme);
EvalReport score(const SpanTable& gold, const SpanTable& pred, const LabelScheme& scheme, MatchMode mode);

// Unweighted mean of per-type F1; throws when the report has no types.
double macro_f1(const EvalReport& report);

// Matched (gold index, pred index) pairs for one sentence under partial rules.
std::vector<std::pair<std::size_t, std::size_t>> greedy_partial_pairs(const std::vector<EntitySpan>& gold,
                                                                      const std::vector<EntitySpan>& pred);

std::size_t overlap(const EntitySpan& a, const EntitySpan& b);

SpanTable gold_table(const Dataset& d);

struct NamedResult {
  std::string name;
  EvalReport strict;
  std::optional<EvalReport> partial;
};

struct RenderedReport {
  std::string text;
  nlohmann::json json;
};

// Table with one row per model: strict P/R/Macro-F1 then partial P/R/Macro-F1,
// as percentages with two decimals. A missing partial block renders as "/".
RenderedReport emit_report(const std::vector<NamedResult>& results);

std::string percent(double fraction);

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

// Prediction file: one JSON object per line, {"sentence_id", "spans": [{start, end, type}]}.
SpanTable read_predictions(const std::string& text);
std::string write_predictions(const SpanTable& table, const std::vector<std::string>& order);

}  // namespace elucid::eval
