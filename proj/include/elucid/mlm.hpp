#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "elucid/core.hpp"
#include "elucid/cote.hpp"
#include "elucid/encoder.hpp"

namespace elucid::mlm {

struct PretrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 0;
  double mask_ratio = 0.15;
  // Replacement split for selected positions: [MASK], random token, unchanged.
  double replace_mask = 0.8;
  double replace_random = 0.1;
  double replace_keep = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MaskedSequence {
  std::vector<std::int32_t> corrupted;
  std::vector<std::size_t> targets;          // ascending positions
  std::vector<std::int32_t> originals;       // original ids at `targets`
};

using MaskedBatch = std::vector<MaskedSequence>;

// Positions holding reserved ids (PAD, UNK, MASK, BOS, EOS) are never selected.
// If the draw selects nothing, one eligible position is forced.
MaskedSequence mask_tokens(const std::vector<std::int32_t>& ids, const PretrainConfig& cfg, std::size_t vocab_size,
                           std::uint64_t seed);

struct MlmLoss {
  double sum = 0.0;   // -sum over targets of log softmax(logits)[original]
  double mean = 0.0;  // sum / targets
  std::size_t targets = 0;
  Matrix grad;        // d sum / d logits: softmax - onehot on target rows, zero elsewhere
};

MlmLoss mlm_loss(const Matrix& logits, const MaskedSequence& batch);

// Tokenizes each elucidation and splits it into BOS ... EOS chunks of at most
// max_len ids.
std::vector<std::vector<std::int32_t>> corpus_sequences(const cote::CoteCorpus& corpus, const Vocab& vocab,
                                                        TokenizationMode mode, std::size_t max_len);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t examples_seen = 0;
  double wall_ms = 0.0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainResult {
  encoder::EncoderParams params;
  std::vector<EpochLog> log;
};

PretrainResult pretrain(const cote::CoteCorpus& corpus, const encoder::EncoderParams& params,
                        const PretrainConfig& cfg, const Vocab& vocab, TokenizationMode mode = TokenizationMode::Latin,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace elucid::mlm
