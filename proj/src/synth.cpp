#include "elucid/synth.hpp"

#include <set>
#include <sstream>
#include <stdexcept>

#include "elucid/rng.hpp"

namespace elucid::synth {

namespace {

struct Lexeme {
  std::vector<std::string> words;
  std::size_t type = 0;
};

const std::vector<std::string> kSeparableTypes = {"COMPONENT", "MATERIAL", "SPACE"};

const std::vector<std::vector<std::string>> kSeparableLexicon = {
    {"beam", "column", "slab", "lintel", "fire door"},
    {"concrete", "steel", "timber", "gypsum", "mineral wool"},
    {"corridor", "lobby", "basement", "stairwell", "plant room"},
};

// Filler words are never entities.
const std::vector<std::string> kFiller = {"the", "shall", "be", "of", "in", "with",
                                                   "each", "minimum", "provided", "not", "and", "to"};

void append_words(Rng& rng, const std::vector<std::string>& pool, std::vector<std::string>& words, std::size_t lo,
                  std::size_t hi) {
  const std::size_t n = lo + rng.below(hi - lo + 1);
  for (std::size_t k = 0; k < n; ++k) words.push_back(pool[rng.below(pool.size())]);
}

void place(std::vector<std::string>& words, std::vector<EntitySpan>& spans, const std::vector<std::string>& entity,
           const std::string& etype) {
  EntitySpan s{words.size(), words.size() + entity.size(), etype};
  words.insert(words.end(), entity.begin(), entity.end());
  spans.push_back(s);
}

std::vector<std::string> split_words(const std::string& phrase) {
  std::istringstream is(phrase);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

std::string sentence_id(const std::string& prefix, std::size_t i) {
  std::string n = std::to_string(i);
  return prefix + std::string(n.size() < 5 ? 5 - n.size() : 0, '0') + n;
}

const std::vector<std::string> kCueTypes = {"COMPONENT", "MATERIAL", "SPACE", "SYSTEM", "STANDARD"};

// Pronounceable nonsense words; none of them collide with filler words.
std::vector<std::string> nonsense_words(std::size_t count, Rng& rng) {
  static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kl", "st", "tr"};
  static const char* vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::set<std::string> seen(kFiller.begin(), kFiller.end());
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w;
    const std::size_t syllables = 2 + rng.below(2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += onsets[rng.below(std::size(onsets))];
      w += vowels[rng.below(std::size(vowels))];
    }
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

struct CueLexicon {
  std::vector<std::string> types;
  std::vector<std::vector<std::string>> head;  // per type
  std::vector<std::vector<std::string>> tail;  // per type
};

CueLexicon cue_lexicon(const CueTaskConfig& cfg) {
  if (cfg.types < 1 || cfg.types > kCueTypes.size())
    throw std::invalid_argument("cue task: types must lie in [1, " + std::to_string(kCueTypes.size()) + "]");
  if (cfg.head_words < 1 || cfg.tail_words < 1) throw std::invalid_argument("cue task: empty word pools");
  Rng rng(derive_seed(cfg.seed, {0x1E7}));
  const auto words = nonsense_words(cfg.types * (cfg.head_words + cfg.tail_words), rng);
  CueLexicon lex;
  lex.types.assign(kCueTypes.begin(), kCueTypes.begin() + static_cast<std::ptrdiff_t>(cfg.types));
  std::size_t k = 0;
  for (std::size_t t = 0; t < cfg.types; ++t) {
    lex.head.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(k),
                          words.begin() + static_cast<std::ptrdiff_t>(k + cfg.head_words));
    k += cfg.head_words;
    lex.tail.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(k),
                          words.begin() + static_cast<std::ptrdiff_t>(k + cfg.tail_words));
    k += cfg.tail_words;
  }
  return lex;
}

Dataset finish(std::vector<LabeledSentence> sentences, std::vector<std::string> types) {
  std::sort(types.begin(), types.end());
  Dataset d;
  d.sentences = std::move(sentences);
  d.scheme = LabelScheme(std::move(types));
  return d;
}

}  // namespace

Dataset separable_dataset(std::size_t sentences, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x5E9}));
  std::vector<LabeledSentence> out;
  for (std::size_t i = 0; i < sentences; ++i) {
    std::vector<std::string> words;
    std::vector<EntitySpan> spans;
    const std::size_t entities = 1 + rng.below(3);
    append_words(rng, kFiller, words, 0, 2);
    for (std::size_t e = 0; e < entities; ++e) {
      const std::size_t t = rng.below(kSeparableTypes.size());
      const auto& pool = kSeparableLexicon[t];
      place(words, spans, split_words(pool[rng.below(pool.size())]), kSeparableTypes[t]);
      append_words(rng, kFiller, words, 1, 3);
    }
    out.push_back({make_sentence(sentence_id("sep-", i), words), spans});
  }
  return finish(std::move(out), kSeparableTypes);
}

Dataset cue_task_dataset(const CueTaskConfig& cfg) {
  const auto lex = cue_lexicon(cfg);
  Rng rng(derive_seed(cfg.seed, {0xDA7A}));
  std::vector<LabeledSentence> out;
  for (std::size_t i = 0; i < cfg.sentences; ++i) {
    const bool ambiguous = rng.uniform() < cfg.ambiguous_fraction;
    std::vector<std::string> words;
    std::vector<EntitySpan> spans;
    const std::size_t entities = 1 + rng.below(2);
    append_words(rng, kFiller, words, 1, 3);
    for (std::size_t e = 0; e < entities; ++e) {
      const std::size_t t = rng.below(lex.types.size());
      const auto& pool = ambiguous ? lex.tail[t] : lex.head[t];
      place(words, spans, {pool[rng.below(pool.size())]}, lex.types[t]);
      append_words(rng, kFiller, words, 1, 3);
    }
    out.push_back({make_sentence(sentence_id("cue-", i), words), spans});
  }
  return finish(std::move(out), lex.types);
}

Dataset cue_task_source(const CueTaskConfig& cfg, std::size_t repeats, std::uint64_t seed) {
  const auto lex = cue_lexicon(cfg);
  std::vector<std::pair<std::string, std::size_t>> draws;
  for (std::size_t r = 0; r < repeats; ++r)
    for (std::size_t t = 0; t < lex.types.size(); ++t) {
      for (const auto& w : lex.head[t]) draws.emplace_back(w, t);
      for (const auto& w : lex.tail[t]) draws.emplace_back(w, t);
    }
  Rng rng(derive_seed(seed, {0x50C}));
  rng.shuffle(draws);
  std::vector<LabeledSentence> out;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    std::vector<std::string> words;
    std::vector<EntitySpan> spans;
    append_words(rng, kFiller, words, 1, 3);
    place(words, spans, {draws[i].first}, lex.types[draws[i].second]);
    append_words(rng, kFiller, words, 1, 3);
    out.push_back({make_sentence(sentence_id("src-", i), words), spans});
  }
  return finish(std::move(out), lex.types);
}

}  // namespace elucid::synth
