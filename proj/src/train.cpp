#include "elucid/train.hpp"

#include <cmath>

#include "elucid/checkpoint.hpp"
#include "elucid/optim.hpp"
#include "elucid/rng.hpp"

namespace elucid::train {

namespace {

using encoder::ConstNamedTensor;
using encoder::EncoderParams;
using encoder::NamedTensor;

std::vector<NamedTensor> body_group(EncoderParams& p) {
  return {{"token_emb", &p.token_emb}, {"pos_emb", &p.pos_emb}, {"mixer_w", &p.mixer_w}, {"mixer_b", &p.mixer_b}};
}

std::vector<ConstNamedTensor> body_group(const EncoderParams& p) {
  return {{"token_emb", &p.token_emb}, {"pos_emb", &p.pos_emb}, {"mixer_w", &p.mixer_w}, {"mixer_b", &p.mixer_b}};
}

std::vector<NamedTensor> head_group(EncoderParams& p, crf::CrfParams& c) {
  std::vector<NamedTensor> g{{"emit_w", &p.emit_w}, {"emit_b", &p.emit_b}, {"crf.transitions", &c.transitions}};
  if (c.boundary) {
    g.push_back({"crf.start", &c.start});
    g.push_back({"crf.end", &c.end});
  }
  return g;
}

std::vector<ConstNamedTensor> head_group(const EncoderParams& p, const crf::CrfParams& c) {
  std::vector<ConstNamedTensor> g{{"emit_w", &p.emit_w}, {"emit_b", &p.emit_b}, {"crf.transitions", &c.transitions}};
  if (c.boundary) {
    g.push_back({"crf.start", &c.start});
    g.push_back({"crf.end", &c.end});
  }
  return g;
}

void add_scaled(Matrix& acc, const Matrix& g, double scale) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += scale * g[k];
}

void round_crf(crf::CrfParams& c) {
  for (Matrix* m : {&c.transitions, &c.start, &c.end})
    for (auto& v : m->data()) v = static_cast<double>(static_cast<float>(v));
}

double validation_f1(const NerModel& m, const Dataset& val) {
  if (val.sentences.empty()) return 0.0;
  auto rep = eval::strict_match(eval::gold_table(val), predict_dataset(m, val), m.scheme);
  return rep.per_type.empty() ? 0.0 : eval::macro_f1(rep);
}

nlohmann::json config_json(const encoder::EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"dim", c.dim},         {"radius", c.radius},  {"hidden", c.hidden},
          {"num_tags", c.num_tags},     {"dropout", c.dropout}, {"max_len", c.max_len}};
}

encoder::EncoderConfig config_from_json(const nlohmann::json& j) {
  encoder::EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.radius = j.at("radius").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.num_tags = j.at("num_tags").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len = j.at("max_len").get<std::size_t>();
  return c;
}

std::vector<std::pair<std::string, const Matrix*>> encoder_tensors(const EncoderParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (const auto& t : p.tensors()) out.emplace_back(t.name, t.tensor);
  return out;
}

EncoderParams encoder_from(const checkpoint::Container& c, const encoder::EncoderConfig& cfg) {
  EncoderParams p = EncoderParams::zeros(cfg);
  for (auto& t : p.tensors()) {
    const Matrix& src = c.get(t.name);
    if (!src.same_shape(*t.tensor))
      throw checkpoint::FormatError("tensor '" + t.name + "' has shape " + std::to_string(src.rows()) + "x" +
                                    std::to_string(src.cols()) + ", config implies " +
                                    std::to_string(t.tensor->rows()) + "x" + std::to_string(t.tensor->cols()));
    *t.tensor = src;
  }
  return p;
}

void expect_kind(const checkpoint::Container& c, const std::string& kind, const std::string& path) {
  const auto found = c.header.value("kind", std::string("?"));
  if (found != kind) throw checkpoint::FormatError(path + ": expected a '" + kind + "' checkpoint, found '" + found + "'");
}

}  // namespace

void FinetuneConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("finetune: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("finetune: batch_size must be >= 1");
  // Zero is accepted so one parameter group can be frozen.
  if (!(encoder_lr >= 0.0) || !(crf_lr >= 0.0)) throw std::invalid_argument("finetune: learning rates must be >= 0");
  if (encoder_lr == 0.0 && crf_lr == 0.0) throw std::invalid_argument("finetune: both learning rates are zero");
}

void NerModel::validate() const {
  encoder.check_shapes();
  if (encoder.config.num_tags != scheme.num_tags() || crf.num_tags() != scheme.num_tags())
    throw std::invalid_argument("model: emission head (" + std::to_string(encoder.config.num_tags) + "), CRF (" +
                                std::to_string(crf.num_tags()) + ") and scheme (" +
                                std::to_string(scheme.num_tags()) + ") disagree on tag count");
  if (encoder.config.vocab_size != vocab.size()) throw std::invalid_argument("model: vocabulary size mismatch");
}

Matrix sentence_emissions(const NerModel& m, const Sentence& s) {
  if (s.size() > m.encoder.config.max_len)
    throw std::length_error("sentence '" + s.id + "' has " + std::to_string(s.size()) + " tokens, above max_len " +
                            std::to_string(m.encoder.config.max_len) + "; split it into chunks before predicting");
  auto st = encoder::encode(m.encoder, m.vocab.encode(s.words()), false, 0);
  return encoder::emissions(m.encoder, st.hidden);
}

std::vector<EntitySpan> predict(const NerModel& m, const Sentence& s) {
  if (s.size() == 0) return {};
  Matrix e = sentence_emissions(m, s);
  auto decoded = m.constrained_decode ? crf::constrained_viterbi(e, m.crf, m.scheme) : crf::viterbi(e, m.crf);
  return bio_to_spans(decoded.tags, m.scheme);
}

eval::SpanTable predict_dataset(const NerModel& m, const Dataset& d) {
  eval::SpanTable t;
  for (const auto& ls : d.sentences) t[ls.sentence.id] = predict(m, ls.sentence);
  return t;
}

FinetuneResult finetune(const EncoderParams& pretrained, const Vocab& vocab, const Dataset& train, const Dataset& val,
                        const FinetuneConfig& cfg, TokenizationMode tokenization,
                        const std::function<void(const FinetuneEpochLog&)>& on_epoch) {
  cfg.validate();
  if (train.sentences.empty()) throw std::invalid_argument("finetune: empty training set");
  if (!(train.scheme == val.scheme)) throw std::invalid_argument("finetune: train and validation label schemes differ");
  if (pretrained.config.vocab_size != vocab.size())
    throw std::invalid_argument("finetune: encoder vocab_size " + std::to_string(pretrained.config.vocab_size) +
                                " != vocabulary size " + std::to_string(vocab.size()));

  NerModel model;
  model.encoder = pretrained;
  encoder::reset_emission_head(model.encoder, train.scheme.num_tags(), derive_seed(cfg.seed, {0xE41}));
  model.crf = crf::CrfParams(train.scheme.num_tags(), cfg.crf_boundary);
  model.scheme = train.scheme;
  model.vocab = vocab;
  model.tokenization = tokenization;
  model.constrained_decode = cfg.constrained_decode;

  struct Example {
    std::vector<std::int32_t> ids;
    TagSequence gold;
  };
  std::vector<Example> examples;
  for (const auto& ls : train.sentences) {
    if (ls.sentence.size() > model.encoder.config.max_len)
      throw std::length_error("training sentence '" + ls.sentence.id + "' exceeds max_len");
    examples.push_back({vocab.encode(ls.sentence.words()), spans_to_bio(ls.sentence, ls.spans, train.scheme)});
  }

  const std::size_t batches = (examples.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches;
  optim::OptimizerState body_state(optim::AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  optim::OptimizerState head_state(optim::AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  EncoderParams enc_grads = EncoderParams::zeros(model.encoder.config);
  crf::CrfParams crf_grads(model.crf.num_tags(), model.crf.boundary);

  FinetuneResult result;
  NerModel best = model;
  double best_f1 = -1.0;
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng order_rng(derive_seed(cfg.seed, {epoch, 0xF7}));
    auto order = order_rng.permutation(examples.size());
    double epoch_nll = 0.0;
    double lr_enc = 0.0, lr_crf = 0.0;

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(examples.size(), lo + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(hi - lo);
      for (auto& t : enc_grads.tensors()) t.tensor->fill(0.0);
      crf_grads = crf::CrfParams(model.crf.num_tags(), model.crf.boundary);

      double batch_nll = 0.0;
      for (std::size_t k = lo; k < hi; ++k) {
        const auto& ex = examples[order[k]];
        auto st = encoder::encode(model.encoder, ex.ids, true, derive_seed(cfg.seed, {epoch, b, k - lo, 3}));
        Matrix em = encoder::emissions(model.encoder, st.hidden);
        auto nll = crf::crf_nll(em, model.crf, ex.gold);
        batch_nll += nll.loss;
        for (auto& v : nll.grad_emissions.data()) v *= scale;
        encoder::accumulate_backward(model.encoder, st, {nullptr, &nll.grad_emissions}, enc_grads);
        add_scaled(crf_grads.transitions, nll.grad.transitions, scale);
        if (model.crf.boundary) {
          add_scaled(crf_grads.start, nll.grad.start, scale);
          add_scaled(crf_grads.end, nll.grad.end, scale);
        }
      }
      if (!std::isfinite(batch_nll))
        throw NonFiniteLoss("non-finite CRF loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));

      lr_enc = optim::linear_schedule(step, total_steps, cfg.encoder_lr, cfg.warmup_steps);
      lr_crf = optim::linear_schedule(step, total_steps, cfg.crf_lr, cfg.warmup_steps);
      optim::adamw_step(body_group(model.encoder), body_group(static_cast<const EncoderParams&>(enc_grads)), body_state,
                        lr_enc);
      optim::adamw_step(head_group(model.encoder, model.crf),
                        head_group(static_cast<const EncoderParams&>(enc_grads),
                                   static_cast<const crf::CrfParams&>(crf_grads)),
                        head_state, lr_crf);
      ++step;
      epoch_nll += batch_nll;
    }

    FinetuneEpochLog log;
    log.epoch = epoch;
    log.train_nll = epoch_nll / static_cast<double>(examples.size());
    log.val_macro_f1 = validation_f1(model, val);
    log.lr_encoder = lr_enc;
    log.lr_crf = lr_crf;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (!cfg.early_stopping) {
      best = model;
      result.best_epoch = epoch;
      continue;
    }
    if (log.val_macro_f1 > best_f1) {
      best_f1 = log.val_macro_f1;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  encoder::round_to_storage(best.encoder);
  round_crf(best.crf);
  result.model = std::move(best);
  return result;
}

// ---------------------------------------------------------------------------
// Persistence

void save_encoder(const std::string& path, const EncoderCheckpoint& ck) {
  ck.params.check_shapes();
  if (ck.vocab.size() != ck.params.config.vocab_size) throw std::invalid_argument("save_encoder: vocabulary size mismatch");
  nlohmann::json h = {{"kind", "encoder"},
                      {"config", config_json(ck.params.config)},
                      {"vocab", ck.vocab.tokens()},
                      {"vocab_hash", ck.vocab.fingerprint()},
                      {"tokenization", to_string(ck.tokenization)},
                      {"seed_lineage", ck.seed_lineage}};
  checkpoint::write_file(path, h, encoder_tensors(ck.params));
}

namespace {

Vocab vocab_from(const nlohmann::json& h) {
  auto tokens = h.at("vocab").get<std::vector<std::string>>();
  if (tokens.size() < static_cast<std::size_t>(Vocab::kNumReserved))
    throw checkpoint::FormatError("checkpoint vocabulary lacks reserved tokens");
  Vocab v(std::vector<std::string>(tokens.begin() + Vocab::kNumReserved, tokens.end()));
  if (v.tokens() != tokens) throw checkpoint::FormatError("checkpoint vocabulary has unexpected reserved tokens");
  if (h.contains("vocab_hash") && h["vocab_hash"].get<std::string>() != v.fingerprint())
    throw checkpoint::FormatError("checkpoint vocabulary hash mismatch");
  return v;
}

}  // namespace

EncoderCheckpoint load_encoder(const std::string& path) {
  auto c = checkpoint::read_file(path);
  expect_kind(c, "encoder", path);
  EncoderCheckpoint ck;
  try {
    const auto cfg = config_from_json(c.header.at("config"));
    ck.params = encoder_from(c, cfg);
    ck.vocab = vocab_from(c.header);
    ck.tokenization = parse_tokenization_mode(c.header.at("tokenization").get<std::string>());
    ck.seed_lineage = c.header.value("seed_lineage", std::vector<std::uint64_t>{});
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint::FormatError(path + ": corrupt encoder header: " + e.what());
  }
  return ck;
}

void save_model(const std::string& path, const NerModel& m) {
  m.validate();
  nlohmann::json h = {{"kind", "ner_model"},
                      {"config", config_json(m.encoder.config)},
                      {"vocab", m.vocab.tokens()},
                      {"vocab_hash", m.vocab.fingerprint()},
                      {"tokenization", to_string(m.tokenization)},
                      {"seed_lineage", m.seed_lineage},
                      {"scheme", m.scheme.types()},
                      {"decode_mode", m.constrained_decode ? "constrained" : "viterbi"},
                      {"crf_boundary", m.crf.boundary}};
  auto tensors = encoder_tensors(m.encoder);
  tensors.emplace_back("crf.transitions", &m.crf.transitions);
  if (m.crf.boundary) {
    tensors.emplace_back("crf.start", &m.crf.start);
    tensors.emplace_back("crf.end", &m.crf.end);
  }
  checkpoint::write_file(path, h, tensors);
}

NerModel load_model(const std::string& path) {
  auto c = checkpoint::read_file(path);
  expect_kind(c, "ner_model", path);
  NerModel m;
  try {
    const auto cfg = config_from_json(c.header.at("config"));
    m.encoder = encoder_from(c, cfg);
    m.vocab = vocab_from(c.header);
    m.tokenization = parse_tokenization_mode(c.header.at("tokenization").get<std::string>());
    m.seed_lineage = c.header.value("seed_lineage", std::vector<std::uint64_t>{});
    m.scheme = LabelScheme(c.header.at("scheme").get<std::vector<std::string>>());
    m.constrained_decode = c.header.at("decode_mode").get<std::string>() == "constrained";
    m.crf = crf::CrfParams(m.scheme.num_tags(), c.header.at("crf_boundary").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint::FormatError(path + ": corrupt model header: " + e.what());
  }
  m.crf.transitions = c.get("crf.transitions");
  if (m.crf.boundary) {
    m.crf.start = c.get("crf.start");
    m.crf.end = c.get("crf.end");
  }
  require_shape(m.crf.transitions, m.scheme.num_tags(), m.scheme.num_tags(), "crf.transitions");
  m.validate();
  return m;
}

}  // namespace elucid::train
