#include "elucid/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace elucid::eval {

namespace {

double ratio(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

double harmonic(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

void check_ids(const SpanTable& gold, const SpanTable& pred) {
  for (const auto& [id, _] : gold)
    if (!pred.count(id)) throw std::invalid_argument("sentence '" + id + "' has gold spans but no prediction entry");
  for (const auto& [id, _] : pred)
    if (!gold.count(id)) throw std::invalid_argument("prediction for unknown sentence '" + id + "'");
}

std::vector<std::pair<std::size_t, std::size_t>> strict_pairs(const std::vector<EntitySpan>& gold,
                                                              const std::vector<EntitySpan>& pred) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> used(gold.size(), false);
  for (std::size_t pi = 0; pi < pred.size(); ++pi) {
    for (std::size_t gi = 0; gi < gold.size(); ++gi) {
      if (!used[gi] && gold[gi] == pred[pi]) {
        used[gi] = true;
        pairs.emplace_back(gi, pi);
        break;
      }
    }
  }
  return pairs;
}

EvalReport aggregate(const SpanTable& gold, const SpanTable& pred, const LabelScheme& scheme, MatchMode mode) {
  check_ids(gold, pred);
  struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
  };
  std::map<std::string, Counts> counts;
  EvalReport rep;
  rep.mode = mode;
  rep.sentences = gold.size();

  for (const auto& [id, gspans] : gold) {
    const auto& pspans = pred.at(id);
    rep.gold_entities += gspans.size();
    rep.pred_entities += pspans.size();
    auto pairs = mode == MatchMode::Strict ? strict_pairs(gspans, pspans) : greedy_partial_pairs(gspans, pspans);
    std::vector<bool> gm(gspans.size(), false), pm(pspans.size(), false);
    for (auto [gi, pi] : pairs) {
      gm[gi] = pm[pi] = true;
      ++counts[gspans[gi].etype].tp;
    }
    for (std::size_t gi = 0; gi < gspans.size(); ++gi)
      if (!gm[gi]) ++counts[gspans[gi].etype].fn;
    for (std::size_t pi = 0; pi < pspans.size(); ++pi)
      if (!pm[pi]) ++counts[pspans[pi].etype].fp;
  }

  std::vector<std::string> order;
  for (const auto& t : scheme.types())
    if (counts.count(t)) order.push_back(t);
  for (const auto& [t, _] : counts)
    if (!scheme.has_type(t)) order.push_back(t);

  for (const auto& t : order) {
    const auto& c = counts.at(t);
    TypeScore s{t, c.tp, c.fp, c.fn};
    s.precision = ratio(c.tp, c.tp + c.fp);
    s.recall = ratio(c.tp, c.tp + c.fn);
    s.f1 = harmonic(s.precision, s.recall);
    rep.per_type.push_back(s);
  }
  if (!rep.per_type.empty()) {
    double p = 0, r = 0, f = 0;
    for (const auto& s : rep.per_type) {
      p += s.precision;
      r += s.recall;
      f += s.f1;
    }
    const double k = static_cast<double>(rep.per_type.size());
    rep.macro_precision = p / k;
    rep.macro_recall = r / k;
    rep.macro_f1 = f / k;
  }
  return rep;
}

nlohmann::json block_json(const EvalReport& r) {
  return {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"macro_f1", r.macro_f1},
          {"precision_pct", percent(r.macro_precision)}, {"recall_pct", percent(r.macro_recall)},
          {"macro_f1_pct", percent(r.macro_f1)}};
}

}  // namespace

std::string to_string(MatchMode m) { return m == MatchMode::Strict ? "strict" : "partial"; }

const TypeScore* EvalReport::find(const std::string& etype) const {
  for (const auto& s : per_type)
    if (s.etype == etype) return &s;
  return nullptr;
}

std::size_t overlap(const EntitySpan& a, const EntitySpan& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  return hi > lo ? hi - lo : 0;
}

std::vector<std::pair<std::size_t, std::size_t>> greedy_partial_pairs(const std::vector<EntitySpan>& gold,
                                                                      const std::vector<EntitySpan>& pred) {
  struct Candidate {
    std::size_t ov, gi, pi;
  };
  std::vector<Candidate> cands;
  for (std::size_t gi = 0; gi < gold.size(); ++gi)
    for (std::size_t pi = 0; pi < pred.size(); ++pi)
      if (gold[gi].etype == pred[pi].etype) {
        const std::size_t ov = overlap(gold[gi], pred[pi]);
        if (ov > 0) cands.push_back({ov, gi, pi});
      }
  std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    const auto& ga = gold[a.gi];
    const auto& gb = gold[b.gi];
    const auto& pa = pred[a.pi];
    const auto& pb = pred[b.pi];
    return std::make_tuple(-static_cast<long long>(a.ov), ga.start, pa.start, ga.end, pa.end, a.gi, a.pi) <
           std::make_tuple(-static_cast<long long>(b.ov), gb.start, pb.start, gb.end, pb.end, b.gi, b.pi);
  });
  std::vector<bool> gu(gold.size(), false), pu(pred.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& c : cands) {
    if (gu[c.gi] || pu[c.pi]) continue;
    gu[c.gi] = pu[c.pi] = true;
    pairs.emplace_back(c.gi, c.pi);
  }
  return pairs;
}

EvalReport strict_match(const SpanTable& gold, const SpanTable& pred, const LabelScheme& scheme) {
  return aggregate(gold, pred, scheme, MatchMode::Strict);
}

EvalReport partial_match(const SpanTable& gold, const SpanTable& pred, const LabelScheme& scheme) {
  return aggregate(gold, pred, scheme, MatchMode::Partial);
}

EvalReport score(const SpanTable& gold, const SpanTable& pred, const LabelScheme& scheme, MatchMode mode) {
  return aggregate(gold, pred, scheme, mode);
}

double macro_f1(const EvalReport& report) {
  if (report.per_type.empty()) throw std::invalid_argument("macro_f1: report has no entity types");
  double f = 0.0;
  for (const auto& s : report.per_type) f += s.f1;
  return f / static_cast<double>(report.per_type.size());
}

SpanTable gold_table(const Dataset& d) {
  SpanTable t;
  for (const auto& ls : d.sentences) t[ls.sentence.id] = ls.spans;
  return t;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

RenderedReport emit_report(const std::vector<NamedResult>& results) {
  if (results.empty()) throw std::invalid_argument("emit_report: no reports");
  RenderedReport out;

  std::size_t name_w = 5;
  for (const auto& r : results) name_w = std::max(name_w, r.name.size());

  auto pad = [](const std::string& s, std::size_t w, bool left) {
    if (s.size() >= w) return s;
    return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
  };
  constexpr std::size_t kCol = 9;
  std::ostringstream os;
  os << pad("", name_w, true) << " | " << pad("Strict Match", 3 * kCol + 2, true) << " | "
     << pad("Partial Match", 3 * kCol + 2, true) << "\n";
  os << pad("Model", name_w, true) << " | " << pad("Precision", kCol, false) << ' ' << pad("Recall", kCol, false)
     << ' ' << pad("Macro-F1", kCol, false) << " | " << pad("Precision", kCol, false) << ' '
     << pad("Recall", kCol, false) << ' ' << pad("Macro-F1", kCol, false) << "\n";
  os << std::string(name_w, '-') << "-+-" << std::string(3 * kCol + 2, '-') << "-+-" << std::string(3 * kCol + 2, '-')
     << "\n";

  auto rows = nlohmann::json::array();
  for (const auto& r : results) {
    os << pad(r.name, name_w, true) << " | " << pad(percent(r.strict.macro_precision), kCol, false) << ' '
       << pad(percent(r.strict.macro_recall), kCol, false) << ' ' << pad(percent(r.strict.macro_f1), kCol, false)
       << " | ";
    nlohmann::json row = {{"model", r.name}, {"strict", block_json(r.strict)}};
    if (r.partial) {
      os << pad(percent(r.partial->macro_precision), kCol, false) << ' '
         << pad(percent(r.partial->macro_recall), kCol, false) << ' '
         << pad(percent(r.partial->macro_f1), kCol, false);
      row["partial"] = block_json(*r.partial);
    } else {
      os << pad("/", 3 * kCol + 2, false);
      row["partial"] = nullptr;
    }
    os << "\n";
    rows.push_back(row);
  }
  out.text = os.str();
  out.json = {{"columns",
               {"model", "strict.precision", "strict.recall", "strict.macro_f1", "partial.precision",
                "partial.recall", "partial.macro_f1"}},
              {"rows", rows}};
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  auto types = nlohmann::json::array();
  for (const auto& s : r.per_type)
    types.push_back({{"type", s.etype}, {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"precision", s.precision},
                     {"recall", s.recall}, {"f1", s.f1}});
  return {{"mode", to_string(r.mode)},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"per_type", types},
          {"sentences", r.sentences},
          {"gold_entities", r.gold_entities},
          {"pred_entities", r.pred_entities}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.mode = j.at("mode").get<std::string>() == "strict" ? MatchMode::Strict : MatchMode::Partial;
  r.macro_precision = j.at("macro_precision").get<double>();
  r.macro_recall = j.at("macro_recall").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  for (const auto& t : j.at("per_type")) {
    TypeScore s;
    s.etype = t.at("type").get<std::string>();
    s.tp = t.at("tp").get<std::size_t>();
    s.fp = t.at("fp").get<std::size_t>();
    s.fn = t.at("fn").get<std::size_t>();
    s.precision = t.at("precision").get<double>();
    s.recall = t.at("recall").get<double>();
    s.f1 = t.at("f1").get<double>();
    r.per_type.push_back(s);
  }
  r.sentences = j.at("sentences").get<std::size_t>();
  r.gold_entities = j.at("gold_entities").get<std::size_t>();
  r.pred_entities = j.at("pred_entities").get<std::size_t>();
  return r;
}

SpanTable read_predictions(const std::string& text) {
  SpanTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto id = j.at("sentence_id").get<std::string>();
      std::vector<EntitySpan> spans;
      for (const auto& s : j.at("spans"))
        spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(), s.at("type").get<std::string>()});
      std::sort(spans.begin(), spans.end());
      if (!t.emplace(id, std::move(spans)).second) throw std::invalid_argument("duplicate sentence_id '" + id + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad prediction record: ") + e.what());
    }
  }
  return t;
}

std::string write_predictions(const SpanTable& table, const std::vector<std::string>& order) {
  std::string out;
  for (const auto& id : order) {
    auto spans = nlohmann::json::array();
    for (const auto& s : table.at(id)) spans.push_back({{"start", s.start}, {"end", s.end}, {"type", s.etype}});
    nlohmann::json j = {{"sentence_id", id}, {"spans", spans}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace elucid::eval
