#pragma once

// Synthetic AEC-flavoured NER datasets used by the bundled data, the demos and
// the learnability checks.

#include <cstddef>
#include <cstdint>

#include "elucid/core.hpp"

namespace elucid::synth {

// Every entity word belongs to exactly one type and filler words are never
// entities, so the token -> tag mapping is a fixed function.
Dataset separable_dataset(std::size_t sentences, std::uint64_t seed);

struct CueTaskConfig {
  std::size_t sentences = 250;
  std::size_t types = 3;
  // Frequent entity words per type; they recur across the labeled data.
  std::size_t head_words = 8;
  // Rare entity words per type; each labeled sentence uses a fresh draw.
  std::size_t tail_words = 120;
  // Fraction of sentences whose entities come from the rare pool.
  double ambiguous_fraction = 0.3;
  std::uint64_t seed = 0;
};

// A labeled NER set whose contexts carry no type information. Rare entity
// words seldom recur, so their types cannot be read off the labeled data.
Dataset cue_task_dataset(const CueTaskConfig& cfg);

// One single-entity sentence per (lexicon word, repeat), every rare word
// included; the source for elucidation generation.
Dataset cue_task_source(const CueTaskConfig& cfg, std::size_t repeats, std::uint64_t seed);

}  // namespace elucid::synth
