#include "elucid/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "elucid/rng.hpp"

namespace elucid {

namespace {

std::string padded_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%06zu", i);
  return buf;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Returns the byte length of the UTF-8 sequence starting with `lead`.
std::size_t utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> Sentence::words() const {
  std::vector<std::string> w;
  w.reserve(tokens.size());
  for (const auto& t : tokens) w.push_back(t.text);
  return w;
}

Sentence make_sentence(std::string id, const std::vector<std::string>& words) {
  Sentence s;
  s.id = std::move(id);
  s.tokens.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i].empty() || words[i].find('\n') != std::string::npos)
      throw std::invalid_argument("token " + std::to_string(i) + " is empty or contains a newline");
    s.tokens.push_back({words[i], i});
  }
  return s;
}

// ---------------------------------------------------------------------------
// LabelScheme

LabelScheme::LabelScheme(std::vector<std::string> types) : types_(std::move(types)) {
  std::set<std::string> seen;
  for (const auto& t : types_) {
    if (t.empty()) throw std::invalid_argument("empty entity type name");
    if (!seen.insert(t).second) throw std::invalid_argument("duplicate entity type: " + t);
  }
}

bool LabelScheme::has_type(std::string_view t) const {
  return std::find(types_.begin(), types_.end(), t) != types_.end();
}

std::size_t LabelScheme::type_index(std::string_view t) const {
  auto it = std::find(types_.begin(), types_.end(), t);
  if (it == types_.end()) throw std::out_of_range("unknown entity type: " + std::string(t));
  return static_cast<std::size_t>(it - types_.begin());
}

TagKind LabelScheme::kind(std::size_t tag) const {
  if (tag == 0) return TagKind::Outside;
  return (tag % 2 == 1) ? TagKind::Begin : TagKind::Inside;
}

std::size_t LabelScheme::tag_type(std::size_t tag) const { return (tag - 1) / 2; }

std::string LabelScheme::tag_name(std::size_t tag) const {
  if (tag >= num_tags()) throw std::out_of_range("tag index out of range: " + std::to_string(tag));
  if (tag == 0) return "O";
  return (kind(tag) == TagKind::Begin ? "B-" : "I-") + types_[tag_type(tag)];
}

std::size_t LabelScheme::tag_index(std::string_view name) const {
  if (name == "O") return 0;
  if (name.size() > 2 && name[1] == '-' && (name[0] == 'B' || name[0] == 'I')) {
    std::size_t t = type_index(name.substr(2));
    return name[0] == 'B' ? begin_tag(t) : inside_tag(t);
  }
  throw std::out_of_range("malformed tag: " + std::string(name));
}

// ---------------------------------------------------------------------------
// Dataset IO

std::size_t Dataset::entity_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.spans.size();
  return n;
}

Dataset parse_dataset(std::string_view text) {
  struct RawRow {
    std::string word;
    char prefix;  // 'O', 'B' or 'I'
    std::string etype;
    std::size_t line;
  };
  struct RawSentence {
    std::string id;
    std::vector<RawRow> rows;
  };

  std::vector<RawSentence> raw;
  std::set<std::string> type_set;
  RawSentence cur;
  std::string pending_id;

  auto flush = [&]() {
    if (!cur.rows.empty()) {
      raw.push_back(std::move(cur));
    }
    cur = RawSentence{};
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (!line.empty() && line.front() == '#') {
      std::string_view body = trim(line.substr(1));
      for (std::string_view key : {std::string_view("id"), std::string_view("sent_id")}) {
        if (body.substr(0, key.size()) == key) {
          std::string_view rest = trim(body.substr(key.size()));
          if (!rest.empty() && (rest.front() == '=' || rest.front() == ':')) {
            pending_id = std::string(trim(rest.substr(1)));
            break;
          }
        }
      }
      continue;
    }
    if (trim(line).empty()) {
      flush();
      continue;
    }

    auto cols = split_ws(line);
    if (cols.size() != 2)
      throw ParseError(line_no, "expected 2 columns (token, tag), found " + std::to_string(cols.size()));
    RawRow row{cols[0], 'O', "", line_no};
    const std::string& tag = cols[1];
    if (tag == "O") {
      row.prefix = 'O';
    } else if (tag.size() > 2 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I')) {
      row.prefix = tag[0];
      row.etype = tag.substr(2);
      type_set.insert(row.etype);
    } else {
      throw ParseError(line_no, "malformed BIO tag '" + tag + "'");
    }
    if (cur.rows.empty()) {
      cur.id = pending_id;
      pending_id.clear();
    }
    cur.rows.push_back(std::move(row));
  }
  flush();

  Dataset d;
  d.scheme = LabelScheme(std::vector<std::string>(type_set.begin(), type_set.end()));
  std::set<std::string> ids;
  for (std::size_t si = 0; si < raw.size(); ++si) {
    auto& rs = raw[si];
    std::string id = rs.id.empty() ? padded_id(si) : rs.id;
    if (!ids.insert(id).second) throw ParseError(rs.rows.front().line, "duplicate sentence id '" + id + "'");

    std::vector<std::string> words;
    TagSequence tags;
    for (std::size_t i = 0; i < rs.rows.size(); ++i) {
      const auto& r = rs.rows[i];
      words.push_back(r.word);
      if (r.prefix == 'O') {
        tags.push_back(0);
        continue;
      }
      std::size_t t = d.scheme.type_index(r.etype);
      if (r.prefix == 'I') {
        bool continues = i > 0 && rs.rows[i - 1].prefix != 'O' && rs.rows[i - 1].etype == r.etype;
        if (!continues)
          d.warnings.push_back("line " + std::to_string(r.line) + ": orphan I-" + r.etype +
                               " promoted to B-" + r.etype);
        tags.push_back(d.scheme.inside_tag(t));
      } else {
        tags.push_back(d.scheme.begin_tag(t));
      }
    }
    LabeledSentence ls;
    ls.sentence = make_sentence(id, words);
    ls.spans = bio_to_spans(tags, d.scheme);
    d.sentences.push_back(std::move(ls));
  }
  return d;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

std::string format_dataset(const Dataset& d) {
  std::string out;
  for (const auto& ls : d.sentences) {
    out += "# id = " + ls.sentence.id + "\n";
    TagSequence tags = spans_to_bio(ls.sentence, ls.spans, d.scheme);
    for (std::size_t i = 0; i < ls.sentence.size(); ++i) {
      out += ls.sentence.tokens[i].text;
      out += '\t';
      out += d.scheme.tag_name(tags[i]);
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// BIO codec

TagSequence spans_to_bio(const Sentence& sentence, const std::vector<EntitySpan>& spans,
                         const LabelScheme& scheme) {
  const std::size_t n = sentence.size();
  TagSequence tags(n, 0);
  std::vector<const EntitySpan*> owner(n, nullptr);
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > n)
      throw std::out_of_range("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                              ") outside sentence of length " + std::to_string(n));
    std::size_t t = scheme.type_index(s.etype);
    for (std::size_t i = s.start; i < s.end; ++i) {
      if (owner[i] != nullptr) {
        const auto* o = owner[i];
        throw std::invalid_argument("overlapping spans [" + std::to_string(o->start) + "," +
                                    std::to_string(o->end) + "," + o->etype + ") and [" +
                                    std::to_string(s.start) + "," + std::to_string(s.end) + "," +
                                    s.etype + ")");
      }
      owner[i] = &s;
      tags[i] = (i == s.start) ? scheme.begin_tag(t) : scheme.inside_tag(t);
    }
  }
  return tags;
}

std::vector<EntitySpan> bio_to_spans(const TagSequence& tags, const LabelScheme& scheme,
                                     std::size_t* repairs) {
  std::vector<EntitySpan> spans;
  bool open = false;
  std::size_t open_type = 0;
  if (repairs) *repairs = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::size_t tag = tags[i];
    if (tag >= scheme.num_tags()) throw std::out_of_range("tag index out of range: " + std::to_string(tag));
    switch (scheme.kind(tag)) {
      case TagKind::Outside:
        open = false;
        break;
      case TagKind::Begin:
        spans.push_back({i, i + 1, scheme.types()[scheme.tag_type(tag)]});
        open = true;
        open_type = scheme.tag_type(tag);
        break;
      case TagKind::Inside:
        if (open && open_type == scheme.tag_type(tag)) {
          spans.back().end = i + 1;
        } else {
          if (repairs) ++*repairs;
          spans.push_back({i, i + 1, scheme.types()[scheme.tag_type(tag)]});
          open = true;
          open_type = scheme.tag_type(tag);
        }
        break;
    }
  }
  return spans;
}

// ---------------------------------------------------------------------------
// Splitting

std::vector<std::vector<std::size_t>> split_indices(std::size_t n, SplitRatios r, std::uint64_t seed) {
  if (!(r.train > 0 && r.val > 0 && r.test > 0)) throw std::invalid_argument("split ratios must be positive");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");

  const auto nv = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.val + 1e-9));
  const auto nt = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.test + 1e-9));
  const std::size_t ntr = n - nv - nt;
  if (n >= 3 && (ntr == 0 || nv == 0 || nt == 0))
    throw std::invalid_argument("split of " + std::to_string(n) + " sentences leaves a partition empty (" +
                                std::to_string(ntr) + "/" + std::to_string(nv) + "/" + std::to_string(nt) + ")");

  Rng rng(seed);
  auto perm = rng.permutation(n);
  std::vector<std::vector<std::size_t>> parts(3);
  parts[0].assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(ntr));
  parts[1].assign(perm.begin() + static_cast<std::ptrdiff_t>(ntr),
                  perm.begin() + static_cast<std::ptrdiff_t>(ntr + nv));
  parts[2].assign(perm.begin() + static_cast<std::ptrdiff_t>(ntr + nv), perm.end());
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

DatasetSplit split_dataset(const Dataset& d, SplitRatios ratios, std::uint64_t seed) {
  auto parts = split_indices(d.size(), ratios, seed);
  auto take = [&](const std::vector<std::size_t>& idx) {
    Dataset out;
    out.scheme = d.scheme;
    for (auto i : idx) out.sentences.push_back(d.sentences[i]);
    return out;
  };
  return {take(parts[0]), take(parts[1]), take(parts[2])};
}

// ---------------------------------------------------------------------------
// Tokenization

TokenizationMode parse_tokenization_mode(std::string_view s) {
  if (s == "latin") return TokenizationMode::Latin;
  if (s == "cjk" || s == "char") return TokenizationMode::Cjk;
  throw std::invalid_argument("unknown tokenization mode '" + std::string(s) + "' (expected latin|cjk)");
}

std::string to_string(TokenizationMode m) { return m == TokenizationMode::Latin ? "latin" : "cjk"; }

std::vector<std::string> tokenize(std::string_view text, TokenizationMode mode) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&]() {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    const std::size_t len = std::min(utf8_len(c), text.size() - i);
    if (is_space(c)) {
      flush();
    } else if (mode == TokenizationMode::Cjk) {
      out.emplace_back(text.substr(i, len));
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      word.append(text.substr(i, len));
    }
    i += len;
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<std::string>& words, TokenizationMode mode) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0 && mode == TokenizationMode::Latin) out += ' ';
    out += words[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& non_reserved_tokens) {
  id_to_token_ = {"<pad>", "<unk>", "<mask>", "<bos>", "<eos>"};
  for (std::int32_t i = 0; i < kNumReserved; ++i) token_to_id_[id_to_token_[i]] = i;
  for (const auto& t : non_reserved_tokens) {
    if (token_to_id_.count(t)) throw std::invalid_argument("duplicate vocabulary token: " + t);
    token_to_id_[t] = static_cast<std::int32_t>(id_to_token_.size());
    id_to_token_.push_back(t);
  }
}

std::int32_t Vocab::lookup(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

std::vector<std::int32_t> Vocab::encode(const std::vector<std::string>& words) const {
  std::vector<std::int32_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(lookup(w));
  return ids;
}

std::string Vocab::fingerprint() const {
  std::string joined;
  for (const auto& t : id_to_token_) {
    joined += t;
    joined += '\n';
  }
  return hex64(fnv1a64(joined));
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpora, std::size_t min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& stream : corpora)
    for (const auto& t : stream) ++freq[t];
  Vocab reserved;
  std::vector<std::pair<std::string, std::size_t>> items;
  for (auto& [tok, n] : freq)
    if (n >= min_count && !reserved.contains(tok)) items.emplace_back(tok, n);
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(items.size());
  for (auto& [tok, n] : items) tokens.push_back(tok);
  return Vocab(tokens);
}

// ---------------------------------------------------------------------------
// Hashing

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string dataset_fingerprint(const Dataset& d) { return hex64(fnv1a64(format_dataset(d))); }

}  // namespace elucid
