#include "elucid/cote.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "elucid/rng.hpp"

namespace elucid::cote {

namespace {

constexpr std::string_view kPlaceholders[] = {"{sentence}", "{span}", "{type}"};

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Explain:
      return "explain";
    case Strategy::Think:
      return "think";
    case Strategy::Role:
      return "role";
  }
  return "explain";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "explain") return Strategy::Explain;
  if (s == "think") return Strategy::Think;
  if (s == "role") return Strategy::Role;
  throw std::invalid_argument("unknown prompt strategy '" + std::string(s) + "' (expected explain|think|role)");
}

PromptStrategy::PromptStrategy(Strategy v, std::string tmpl) : variant(v), template_text(std::move(tmpl)) {
  for (auto ph : kPlaceholders) {
    const std::size_t n = count_occurrences(template_text, ph);
    if (n != 1)
      throw std::invalid_argument("prompt template must contain " + std::string(ph) + " exactly once (found " +
                                  std::to_string(n) + ")");
  }
}

PromptStrategy PromptStrategy::defaults(Strategy v) {
  switch (v) {
    case Strategy::Explain:
      return {v,
              "Sentence: {sentence}\nExplain in 2-3 sentences why '{span}' is an entity of type '{type}' in this "
              "sentence."};
    case Strategy::Think:
      return {v,
              "Sentence: {sentence}\nWhy is '{span}' an entity of type '{type}' in this sentence? Reason step by "
              "step, then conclude with the explanation."};
    case Strategy::Role:
      return {v,
              "Sentence: {sentence}\nEntity type: {type}\nDescribe the functional role '{span}' plays in the "
              "regulation described."};
  }
  throw std::logic_error("unreachable");
}

void ChatEndpointConfig::validate() const {
  if (max_parallel < 1) throw std::invalid_argument("chat endpoint: max_parallel must be >= 1");
  if (max_tokens < 1) throw std::invalid_argument("chat endpoint: max_tokens must be >= 1");
  if (model.empty()) throw std::invalid_argument("chat endpoint: model must be set");
}

Prompt build_prompt(const PromptStrategy& strategy, const Sentence& x, const EntitySpan& s, const std::string& etype,
                    TokenizationMode mode) {
  if (s.start >= s.end || s.end > x.size())
    throw std::out_of_range("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                            ") out of bounds for sentence '" + x.id + "' of length " + std::to_string(x.size()));
  if (etype.empty()) throw std::invalid_argument("build_prompt: empty entity type");

  const auto words = x.words();
  Prompt p;
  p.provenance.sentence_id = x.id;
  p.provenance.span = {s.start, s.end, etype};
  p.provenance.strategy = strategy.variant;
  p.provenance.sentence_text = detokenize(words, mode);
  p.provenance.span_text = detokenize(std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(s.start),
                                                               words.begin() + static_cast<std::ptrdiff_t>(s.end)),
                                      mode);

  // Single left-to-right pass so substituted text is never re-expanded.
  const std::string& t = strategy.template_text;
  std::string out;
  std::size_t i = 0;
  while (i < t.size()) {
    bool replaced = false;
    if (t[i] == '{') {
      for (auto ph : kPlaceholders) {
        if (t.compare(i, ph.size(), ph) == 0) {
          if (ph == "{sentence}") out += p.provenance.sentence_text;
          else if (ph == "{span}") out += p.provenance.span_text;
          else out += etype;
          i += ph.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += t[i++];
  }
  p.text = std::move(out);
  return p;
}

std::string MockChatBackend::render(const Provenance& p) {
  return "E:" + p.span_text + ":" + p.span.etype + ":" + hex64(fnv1a64(p.sentence_text)).substr(0, 8);
}

ChatReply MockChatBackend::complete(const Prompt& prompt, const ChatEndpointConfig& cfg) {
  ChatReply r;
  r.content = render(prompt.provenance);
  r.finish_reason = "stop";
  r.completion_tokens = tokenize(r.content, TokenizationMode::Latin).size();
  r.model = cfg.model;
  return r;
}

CoteRecord request_elucidation(ChatBackend& backend, const ChatEndpointConfig& cfg, const Prompt& p) {
  cfg.validate();
  ChatReply reply;
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      reply = backend.complete(p, cfg);
      break;
    } catch (const TransientError& e) {
      if (attempt >= cfg.retry_budget)
        throw TransientError(std::string(e.what()) + " (gave up after " + std::to_string(attempt + 1) + " attempts)");
      std::this_thread::sleep_for(cfg.backoff_base * (1LL << std::min<std::size_t>(attempt, 16)));
    }
  }
  if (blank(reply.content)) throw ContentError("empty elucidation for sentence '" + p.provenance.sentence_id + "'");

  CoteRecord rec;
  rec.text = reply.content;
  rec.provenance = p.provenance;
  rec.model = reply.model.empty() ? cfg.model : reply.model;
  rec.finish_reason = reply.finish_reason;
  rec.tokens = reply.completion_tokens > 0 ? reply.completion_tokens
                                           : std::max<std::size_t>(1, tokenize(reply.content, TokenizationMode::Latin).size());
  return rec;
}

BuildResult build_corpus(const Dataset& d, const PromptStrategy& strategy, const ChatEndpointConfig& cfg,
                         ChatBackend& backend, TokenizationMode mode) {
  cfg.validate();
  std::vector<Prompt> prompts;
  for (std::size_t si = 0; si < d.sentences.size(); ++si) {
    const auto& ls = d.sentences[si];
    for (const auto& span : ls.spans) {
      Prompt p = build_prompt(strategy, ls.sentence, span, span.etype, mode);
      p.provenance.sentence_index = si;
      prompts.push_back(std::move(p));
    }
  }
  if (prompts.empty()) throw std::invalid_argument("build_corpus: dataset has no entity instances");

  enum class Outcome { Ok, Transient, Content, Request };
  std::vector<std::optional<CoteRecord>> results(prompts.size());
  std::vector<Outcome> outcomes(prompts.size(), Outcome::Ok);
  std::vector<std::string> errors(prompts.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      try {
        results[i] = request_elucidation(backend, cfg, prompts[i]);
      } catch (const TransientError& e) {
        outcomes[i] = Outcome::Transient;
        errors[i] = e.what();
      } catch (const ContentError& e) {
        outcomes[i] = Outcome::Content;
        errors[i] = e.what();
      } catch (const RequestError& e) {
        outcomes[i] = Outcome::Request;
        errors[i] = e.what();
      }
    }
  };
  const std::size_t nthreads = std::min(cfg.max_parallel, prompts.size());
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BuildResult out;
  out.corpus.strategy = strategy.variant;
  out.corpus.fingerprint = dataset_fingerprint(d);
  out.summary.total = prompts.size();
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (results[i]) {
      out.summary.completion_tokens += results[i]->tokens;
      out.corpus.records.push_back(std::move(*results[i]));
      continue;
    }
    switch (outcomes[i]) {
      case Outcome::Transient:
        ++out.summary.transient_skips;
        break;
      case Outcome::Content:
        ++out.summary.content_skips;
        break;
      default:
        ++out.summary.request_skips;
        break;
    }
    const auto& pv = prompts[i].provenance;
    out.summary.skip_log.push_back(pv.sentence_id + "[" + std::to_string(pv.span.start) + "," +
                                   std::to_string(pv.span.end) + ")" + ": " + errors[i]);
  }
  out.summary.records = out.corpus.records.size();
  if (2 * out.summary.skipped() > out.summary.total)
    throw CorpusAbort("more than half of the elucidation requests failed (" + std::to_string(out.summary.skipped()) +
                          "/" + std::to_string(out.summary.total) + ")",
                      out.summary);
  return out;
}

CoteCorpus subset_corpus(const CoteCorpus& c, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subset_corpus: fraction must be in (0, 1]");
  const std::size_t n = c.records.size();
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  Rng rng(seed);
  auto perm = rng.permutation(n);
  std::vector<std::size_t> keep(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(std::min(k, n)));
  std::sort(keep.begin(), keep.end());
  CoteCorpus out;
  out.strategy = c.strategy;
  out.fingerprint = c.fingerprint;
  for (auto i : keep) out.records.push_back(c.records[i]);
  return out;
}

std::string write_corpus(const CoteCorpus& c) {
  std::string out;
  for (const auto& r : c.records) {
    nlohmann::json j = {{"text", r.text},
                        {"sentence_id", r.provenance.sentence_id},
                        {"span_start", r.provenance.span.start},
                        {"span_end", r.provenance.span.end},
                        {"entity_type", r.provenance.span.etype},
                        {"strategy", to_string(r.provenance.strategy)},
                        {"model", r.model},
                        {"tokens", r.tokens}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

CoteCorpus read_corpus(const std::string& text) {
  CoteCorpus c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      auto j = nlohmann::json::parse(line);
      CoteRecord r;
      r.text = j.at("text").get<std::string>();
      r.provenance.sentence_id = j.at("sentence_id").get<std::string>();
      r.provenance.span = {j.at("span_start").get<std::size_t>(), j.at("span_end").get<std::size_t>(),
                           j.at("entity_type").get<std::string>()};
      r.provenance.strategy = parse_strategy(j.at("strategy").get<std::string>());
      r.model = j.at("model").get<std::string>();
      r.tokens = j.at("tokens").get<std::size_t>();
      r.finish_reason = "stop";
      if (blank(r.text)) throw ParseError(line_no, "empty elucidation text");
      if (first) {
        c.strategy = r.provenance.strategy;
        first = false;
      } else if (r.provenance.strategy != c.strategy) {
        throw ParseError(line_no, "corpus mixes prompt strategies");
      }
      c.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad corpus record: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return c;
}

}  // namespace elucid::cote
