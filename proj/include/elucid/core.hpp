#pragma once

// Domain types shared by every stage: sentences, typed spans, the BIO label
// scheme, CoNLL-style dataset IO, deterministic splitting and the vocabulary.

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace elucid {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Token {
  std::string text;
  std::size_t index = 0;
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> words() const;
};

Sentence make_sentence(std::string id, const std::vector<std::string>& words);

struct EntitySpan {
  std::size_t start = 0;  // inclusive token index
  std::size_t end = 0;    // exclusive
  std::string etype;

  std::size_t length() const { return end - start; }
  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend bool operator<(const EntitySpan& a, const EntitySpan& b) {
    return std::tie(a.start, a.end, a.etype) < std::tie(b.start, b.end, b.etype);
  }
};

enum class TagKind { Outside, Begin, Inside };

// Tag layout: 0 = O, then B-t / I-t pairs in type order (B at 2k+1, I at 2k+2).
class LabelScheme {
 public:
  LabelScheme() = default;
  explicit LabelScheme(std::vector<std::string> types);

  const std::vector<std::string>& types() const { return types_; }
  std::size_t num_types() const { return types_.size(); }
  std::size_t num_tags() const { return 1 + 2 * types_.size(); }

  bool has_type(std::string_view t) const;
  std::size_t type_index(std::string_view t) const;  // throws on unknown

  std::size_t begin_tag(std::size_t type) const { return 2 * type + 1; }
  std::size_t inside_tag(std::size_t type) const { return 2 * type + 2; }
  TagKind kind(std::size_t tag) const;
  std::size_t tag_type(std::size_t tag) const;  // undefined for O

  std::string tag_name(std::size_t tag) const;
  std::size_t tag_index(std::string_view name) const;  // throws on unknown

  friend bool operator==(const LabelScheme&, const LabelScheme&) = default;

 private:
  std::vector<std::string> types_;
};

using TagSequence = std::vector<std::size_t>;

struct LabeledSentence {
  Sentence sentence;
  std::vector<EntitySpan> spans;  // sorted by start, non-overlapping
};

struct Dataset {
  std::vector<LabeledSentence> sentences;
  LabelScheme scheme;
  std::vector<std::string> warnings;

  std::size_t size() const { return sentences.size(); }
  std::size_t entity_count() const;
};

// Parses `<token>\t<tag>` lines; blank lines separate sentences and `#` at
// column 0 starts a comment. A comment of the form `# id = X` names the next
// sentence; otherwise ids are assigned as zero-padded running indices.
Dataset parse_dataset(std::string_view text);
Dataset load_dataset(const std::string& path);
std::string format_dataset(const Dataset& d);

TagSequence spans_to_bio(const Sentence& sentence, const std::vector<EntitySpan>& spans,
                         const LabelScheme& scheme);

// Orphan I-t tags open a new span. `repairs`, when given, counts them.
std::vector<EntitySpan> bio_to_spans(const TagSequence& tags, const LabelScheme& scheme,
                                     std::size_t* repairs = nullptr);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

DatasetSplit split_dataset(const Dataset& d, SplitRatios ratios, std::uint64_t seed);

// Index-level view of the split, for callers that only need the permutation.
std::vector<std::vector<std::size_t>> split_indices(std::size_t n, SplitRatios ratios,
                                                    std::uint64_t seed);

enum class TokenizationMode { Latin, Cjk };

TokenizationMode parse_tokenization_mode(std::string_view s);
std::string to_string(TokenizationMode m);

std::vector<std::string> tokenize(std::string_view text, TokenizationMode mode);
std::string detokenize(const std::vector<std::string>& words, TokenizationMode mode);

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kMask = 2;
  static constexpr std::int32_t kBos = 3;
  static constexpr std::int32_t kEos = 4;
  static constexpr std::int32_t kNumReserved = 5;

  Vocab();
  explicit Vocab(const std::vector<std::string>& non_reserved_tokens);

  std::int32_t lookup(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return id_to_token_.at(id); }
  std::size_t size() const { return id_to_token_.size(); }
  bool contains(std::string_view token) const;
  static bool is_reserved(std::int32_t id) { return id >= 0 && id < kNumReserved; }

  std::vector<std::int32_t> encode(const std::vector<std::string>& words) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  std::string fingerprint() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.id_to_token_ == b.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
};

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpora, std::size_t min_count);

// 64-bit FNV-1a, rendered as 16 lowercase hex characters.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string dataset_fingerprint(const Dataset& d);

}  // namespace elucid
