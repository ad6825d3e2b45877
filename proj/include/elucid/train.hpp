#pragma once

// NER fine-tuning of an encoder + CRF, prediction, and model persistence.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "elucid/core.hpp"
#include "elucid/crf.hpp"
#include "elucid/encoder.hpp"
#include "elucid/eval.hpp"

namespace elucid::train {

struct FinetuneConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  // The encoder body (embeddings and mixer).
  double encoder_lr = 5e-5;
  // The task head: emission projection and CRF scores.
  double crf_lr = 5e-1;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 0;
  bool early_stopping = true;
  std::size_t patience = 10;
  bool crf_boundary = false;
  bool constrained_decode = false;

  void validate() const;
};

struct NerModel {
  encoder::EncoderParams encoder;
  crf::CrfParams crf;
  LabelScheme scheme;
  Vocab vocab;
  TokenizationMode tokenization = TokenizationMode::Latin;
  bool constrained_decode = false;
  std::vector<std::uint64_t> seed_lineage;

  void validate() const;
};

struct FinetuneEpochLog {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double val_macro_f1 = 0.0;
  double lr_encoder = 0.0;
  double lr_crf = 0.0;
};

struct FinetuneResult {
  NerModel model;
  std::vector<FinetuneEpochLog> log;
  std::size_t best_epoch = 0;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// `pretrained` must be sized for `vocab`; its emission head is re-initialised
// for the training scheme.
FinetuneResult finetune(const encoder::EncoderParams& pretrained, const Vocab& vocab, const Dataset& train,
                        const Dataset& val, const FinetuneConfig& cfg,
                        TokenizationMode tokenization = TokenizationMode::Latin,
                        const std::function<void(const FinetuneEpochLog&)>& on_epoch = {});

Matrix sentence_emissions(const NerModel& m, const Sentence& s);
std::vector<EntitySpan> predict(const NerModel& m, const Sentence& s);
eval::SpanTable predict_dataset(const NerModel& m, const Dataset& d);

// Persistence. Encoder checkpoints carry the vocabulary and tokenization mode
// so a later fine-tuning run can rebuild its inputs.
struct EncoderCheckpoint {
  encoder::EncoderParams params;
  Vocab vocab;
  TokenizationMode tokenization = TokenizationMode::Latin;
  std::vector<std::uint64_t> seed_lineage;
};

void save_encoder(const std::string& path, const EncoderCheckpoint& ck);
EncoderCheckpoint load_encoder(const std::string& path);

void save_model(const std::string& path, const NerModel& m);
NerModel load_model(const std::string& path);

}  // namespace elucid::train
