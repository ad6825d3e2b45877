#include "elucid/mlm.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "elucid/optim.hpp"
#include "elucid/rng.hpp"

namespace elucid::mlm {

namespace {

bool eligible(std::int32_t id) { return !Vocab::is_reserved(id); }

std::vector<encoder::NamedTensor> pretrain_group(encoder::EncoderParams& p) {
  return {{"token_emb", &p.token_emb}, {"pos_emb", &p.pos_emb}, {"mixer_w", &p.mixer_w},
          {"mixer_b", &p.mixer_b},     {"mlm_w", &p.mlm_w},     {"mlm_b", &p.mlm_b}};
}

std::vector<encoder::ConstNamedTensor> pretrain_group(const encoder::EncoderParams& p) {
  return {{"token_emb", &p.token_emb}, {"pos_emb", &p.pos_emb}, {"mixer_w", &p.mixer_w},
          {"mixer_b", &p.mixer_b},     {"mlm_w", &p.mlm_w},     {"mlm_b", &p.mlm_b}};
}

std::string norm_summary(const encoder::EncoderParams& p) {
  std::ostringstream os;
  bool first = true;
  for (const auto& t : p.tensors()) {
    double s = 0.0;
    for (double v : t.tensor->data()) s += v * v;
    os << (first ? "" : ", ") << t.name << "=" << std::sqrt(s);
    first = false;
  }
  return os.str();
}

}  // namespace

void PretrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("pretrain: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("pretrain: learning_rate must be >= 0");
  for (double r : {mask_ratio, replace_mask, replace_random, replace_keep})
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("pretrain: ratios must lie in [0, 1]");
  if (std::abs(replace_mask + replace_random + replace_keep - 1.0) > 1e-9)
    throw std::invalid_argument("pretrain: mask/random/keep split must sum to 1");
}

MaskedSequence mask_tokens(const std::vector<std::int32_t>& ids, const PretrainConfig& cfg, std::size_t vocab_size,
                           std::uint64_t seed) {
  if (ids.empty()) throw std::invalid_argument("mask_tokens: empty sequence");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (eligible(ids[i])) candidates.push_back(i);
  if (candidates.empty()) throw std::invalid_argument("mask_tokens: every position holds a reserved id");

  Rng rng(seed);
  std::vector<std::size_t> selected;
  for (auto i : candidates)
    if (rng.uniform() < cfg.mask_ratio) selected.push_back(i);
  if (selected.empty()) selected.push_back(candidates[rng.below(candidates.size())]);

  const std::size_t n_regular = vocab_size > static_cast<std::size_t>(Vocab::kNumReserved)
                                    ? vocab_size - static_cast<std::size_t>(Vocab::kNumReserved)
                                    : 0;
  MaskedSequence out;
  out.corrupted = ids;
  for (auto pos : selected) {
    out.targets.push_back(pos);
    out.originals.push_back(ids[pos]);
    const double u = rng.uniform();
    if (u < cfg.replace_mask) {
      out.corrupted[pos] = Vocab::kMask;
    } else if (u < cfg.replace_mask + cfg.replace_random && n_regular > 0) {
      out.corrupted[pos] = static_cast<std::int32_t>(Vocab::kNumReserved + rng.below(n_regular));
    }
  }
  return out;
}

MlmLoss mlm_loss(const Matrix& logits, const MaskedSequence& batch) {
  if (batch.targets.empty()) throw std::invalid_argument("mlm_loss: no target positions");
  if (batch.targets.size() != batch.originals.size())
    throw std::invalid_argument("mlm_loss: targets and originals differ in length");
  if (logits.rows() != batch.corrupted.size())
    throw std::invalid_argument("mlm_loss: logits rows " + std::to_string(logits.rows()) + " != sequence length " +
                                std::to_string(batch.corrupted.size()));
  MlmLoss out;
  out.grad = Matrix(logits.rows(), logits.cols());
  out.targets = batch.targets.size();
  for (std::size_t k = 0; k < batch.targets.size(); ++k) {
    const std::size_t row = batch.targets[k];
    const auto target = static_cast<std::size_t>(batch.originals[k]);
    if (row >= logits.rows() || target >= logits.cols()) throw std::out_of_range("mlm_loss: target out of range");
    auto z = logits.row(row);
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    const double lse = m + std::log(s);
    out.sum += lse - z[target];
    auto g = out.grad.row(row);
    for (std::size_t c = 0; c < z.size(); ++c) g[c] += std::exp(z[c] - lse);
    g[target] -= 1.0;
  }
  out.mean = out.sum / static_cast<double>(out.targets);
  return out;
}

std::vector<std::vector<std::int32_t>> corpus_sequences(const cote::CoteCorpus& corpus, const Vocab& vocab,
                                                        TokenizationMode mode, std::size_t max_len) {
  if (max_len < 3) throw std::invalid_argument("corpus_sequences: max_len must be >= 3");
  const std::size_t chunk = max_len - 2;
  std::vector<std::vector<std::int32_t>> out;
  for (const auto& r : corpus.records) {
    auto ids = vocab.encode(tokenize(r.text, mode));
    for (std::size_t off = 0; off < ids.size(); off += chunk) {
      std::vector<std::int32_t> seq{Vocab::kBos};
      const std::size_t end = std::min(ids.size(), off + chunk);
      seq.insert(seq.end(), ids.begin() + static_cast<std::ptrdiff_t>(off), ids.begin() + static_cast<std::ptrdiff_t>(end));
      seq.push_back(Vocab::kEos);
      bool any = false;
      for (auto id : seq) any = any || eligible(id);
      if (any) out.push_back(std::move(seq));
    }
  }
  return out;
}

PretrainResult pretrain(const cote::CoteCorpus& corpus, const encoder::EncoderParams& params,
                        const PretrainConfig& cfg, const Vocab& vocab, TokenizationMode mode,
                        const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (corpus.records.empty()) throw std::invalid_argument("pretrain: empty corpus");
  if (vocab.size() != params.config.vocab_size)
    throw std::invalid_argument("pretrain: vocabulary size " + std::to_string(vocab.size()) +
                                " does not match encoder vocab_size " + std::to_string(params.config.vocab_size));

  PretrainResult result{params, {}};
  if (cfg.epochs == 0) return result;

  auto& p = result.params;
  const auto sequences = corpus_sequences(corpus, vocab, mode, p.config.max_len);
  if (sequences.empty()) throw std::invalid_argument("pretrain: corpus yields no maskable tokens");

  const std::size_t batches = (sequences.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches;
  optim::OptimizerState state(optim::AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  encoder::EncoderParams grads = encoder::EncoderParams::zeros(p.config);
  std::size_t step = 0;
  std::size_t seen = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng order_rng(derive_seed(cfg.seed, {epoch, 0xE0}));
    auto order = order_rng.permutation(sequences.size());
    double epoch_loss = 0.0;
    std::size_t epoch_targets = 0;

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(sequences.size(), lo + cfg.batch_size);
      MaskedBatch batch;
      std::size_t batch_targets = 0;
      for (std::size_t k = lo; k < hi; ++k) {
        batch.push_back(mask_tokens(sequences[order[k]], cfg, vocab.size(), derive_seed(cfg.seed, {epoch, b, k - lo, 1})));
        batch_targets += batch.back().targets.size();
      }

      for (auto& t : grads.tensors()) t.tensor->fill(0.0);
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        auto st = encoder::encode(p, batch[k].corrupted, true, derive_seed(cfg.seed, {epoch, b, k, 2}));
        Matrix logits = encoder::mlm_logits(p, st.hidden);
        MlmLoss loss = mlm_loss(logits, batch[k]);
        batch_loss += loss.sum;
        const double scale = 1.0 / static_cast<double>(batch_targets);
        for (auto& v : loss.grad.data()) v *= scale;
        encoder::accumulate_backward(p, st, {&loss.grad, nullptr}, grads);
      }
      if (!std::isfinite(batch_loss))
        throw NonFiniteLoss("non-finite MLM loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                            "; parameter norms: " + norm_summary(p));

      const double lr = optim::linear_schedule(step, total_steps, cfg.learning_rate, cfg.warmup_steps);
      optim::adamw_step(pretrain_group(p), pretrain_group(static_cast<const encoder::EncoderParams&>(grads)), state, lr);
      ++step;
      epoch_loss += batch_loss;
      epoch_targets += batch_targets;
      seen += batch.size();
    }

    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = epoch_loss / static_cast<double>(epoch_targets);
    log.examples_seen = seen;
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  encoder::round_to_storage(p);
  return result;
}

}  // namespace elucid::mlm
