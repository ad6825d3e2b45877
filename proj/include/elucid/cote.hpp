#pragma once

// Elucidation corpus generation: one prompt per gold entity instance, one
// chat-completion request per prompt, one corpus record per successful reply.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "elucid/core.hpp"

namespace elucid::cote {

enum class Strategy { Explain, Think, Role };

std::string to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct PromptStrategy {
  Strategy variant = Strategy::Explain;
  std::string template_text;

  // Throws std::invalid_argument unless {sentence}, {span} and {type} each
  // occur exactly once.
  PromptStrategy(Strategy v, std::string tmpl);
  static PromptStrategy defaults(Strategy v);
};

struct Provenance {
  std::string sentence_id;
  std::size_t sentence_index = 0;
  EntitySpan span;
  Strategy strategy = Strategy::Explain;
  std::string sentence_text;
  std::string span_text;
};

struct Prompt {
  std::string text;
  Provenance provenance;
};

struct CoteRecord {
  std::string text;
  Provenance provenance;
  std::string model;
  std::string finish_reason;
  std::size_t tokens = 0;
};

struct CoteCorpus {
  std::vector<CoteRecord> records;
  Strategy strategy = Strategy::Explain;
  std::string fingerprint;

  std::size_t size() const { return records.size(); }
};

struct ChatEndpointConfig {
  std::string base_url = "http://localhost:8000/v1";
  std::string model = "Qwen3-8B";
  double temperature = 0.7;
  std::size_t max_tokens = 256;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_parallel = 4;
  std::size_t retry_budget = 3;
  std::chrono::milliseconds backoff_base{500};
  std::string api_key;  // empty: read COTE_API_KEY at request time

  void validate() const;
};

class TransientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-retryable endpoint rejection (4xx other than 408/429, malformed body).
class RequestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChatReply {
  std::string content;
  std::string finish_reason;
  std::size_t completion_tokens = 0;
  std::string model;
};

// One attempt at a completion. Implementations throw TransientError for
// retryable failures and RequestError for permanent ones.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatReply complete(const Prompt& prompt, const ChatEndpointConfig& cfg) = 0;
};

// OpenAI-compatible POST {base_url}/chat/completions.
class HttpChatBackend : public ChatBackend {
 public:
  ChatReply complete(const Prompt& prompt, const ChatEndpointConfig& cfg) override;

  static std::string request_body(const Prompt& prompt, const ChatEndpointConfig& cfg);
  static ChatReply parse_response(const std::string& body);
};

// Deterministic offline stand-in: replies "E:{span}:{type}:{h}" where h is the
// first 8 hex characters of the FNV-1a hash of the detokenized sentence.
class MockChatBackend : public ChatBackend {
 public:
  ChatReply complete(const Prompt& prompt, const ChatEndpointConfig& cfg) override;
  static std::string render(const Provenance& p);
};

Prompt build_prompt(const PromptStrategy& strategy, const Sentence& x, const EntitySpan& s,
                    const std::string& etype, TokenizationMode mode = TokenizationMode::Latin);

// Retries TransientError with exponential backoff up to cfg.retry_budget
// extra attempts. Empty replies raise ContentError without retrying.
CoteRecord request_elucidation(ChatBackend& backend, const ChatEndpointConfig& cfg, const Prompt& p);

struct CorpusSummary {
  std::size_t total = 0;
  std::size_t records = 0;
  std::size_t transient_skips = 0;
  std::size_t content_skips = 0;
  std::size_t request_skips = 0;
  std::size_t completion_tokens = 0;
  std::vector<std::string> skip_log;

  std::size_t skipped() const { return transient_skips + content_skips + request_skips; }
};

class CorpusAbort : public std::runtime_error {
 public:
  CorpusAbort(const std::string& what, CorpusSummary s) : std::runtime_error(what), summary(std::move(s)) {}
  CorpusSummary summary;
};

struct BuildResult {
  CoteCorpus corpus;
  CorpusSummary summary;
};

BuildResult build_corpus(const Dataset& d, const PromptStrategy& strategy, const ChatEndpointConfig& cfg,
                         ChatBackend& backend, TokenizationMode mode = TokenizationMode::Latin);

CoteCorpus subset_corpus(const CoteCorpus& c, double fraction, std::uint64_t seed);

// JSON lines with text, sentence_id, span_start, span_end, entity_type,
// strategy, model, tokens.
std::string write_corpus(const CoteCorpus& c);
CoteCorpus read_corpus(const std::string& text);

}  // namespace elucid::cote
