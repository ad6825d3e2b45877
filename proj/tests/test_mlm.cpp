#include <gtest/gtest.h>

#include <cmath>

#include "elucid/mlm.hpp"
#include "elucid/optim.hpp"
#include "elucid/rng.hpp"

using namespace elucid;

namespace {

cote::CoteCorpus corpus_of(const std::vector<std::string>& texts) {
  cote::CoteCorpus c;
  for (const auto& t : texts) c.records.push_back({t, {}, "m", "stop", 0});
  return c;
}

}  // namespace

TEST(Masking, RatesMatchConfiguration) {
  const std::size_t vocab = 50;
  mlm::PretrainConfig cfg;
  Rng rng(41);
  std::size_t positions = 0, selected = 0, masked = 0, randomised = 0, kept = 0;
  for (std::uint64_t s = 0; positions < 20000; ++s) {
    std::vector<std::int32_t> ids(20);
    for (auto& id : ids) id = static_cast<std::int32_t>(rng.below(vocab));
    ids.front() = Vocab::kBos;
    ids.back() = Vocab::kEos;
    const auto m = mlm::mask_tokens(ids, cfg, vocab, s);
    for (auto id : ids) positions += !Vocab::is_reserved(id);
    selected += m.targets.size();
    for (std::size_t k = 0; k < m.targets.size(); ++k) {
      const auto pos = m.targets[k];
      ASSERT_FALSE(Vocab::is_reserved(ids[pos]));
      EXPECT_EQ(m.originals[k], ids[pos]);
      const auto now = m.corrupted[pos];
      if (now == Vocab::kMask) {
        ++masked;
      } else if (now == ids[pos]) {
        ++kept;
      } else {
        ++randomised;
        EXPECT_FALSE(Vocab::is_reserved(now));
      }
    }
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (std::find(m.targets.begin(), m.targets.end(), i) == m.targets.end()) EXPECT_EQ(m.corrupted[i], ids[i]);
  }
  const double frac = static_cast<double>(selected) / static_cast<double>(positions);
  EXPECT_GE(frac, 0.13);
  EXPECT_LE(frac, 0.17);
  const double sel = static_cast<double>(selected);
  // A random replacement can redraw the original id, which then counts as kept.
  EXPECT_NEAR(masked / sel, 0.8, 0.03);
  EXPECT_NEAR(randomised / sel, 0.1, 0.03);
  EXPECT_NEAR(kept / sel, 0.1, 0.03);
}

TEST(Masking, DeterministicAndNeverEmpty) {
  mlm::PretrainConfig cfg;
  const std::vector<std::int32_t> ids{Vocab::kBos, 7, Vocab::kEos};
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto m = mlm::mask_tokens(ids, cfg, 10, s);
    ASSERT_EQ(m.targets, std::vector<std::size_t>{1});
    EXPECT_EQ(m.corrupted, mlm::mask_tokens(ids, cfg, 10, s).corrupted);
  }
  EXPECT_THROW(mlm::mask_tokens({Vocab::kBos, Vocab::kEos}, cfg, 10, 0), std::invalid_argument);
}

TEST(MlmLoss, MatchesLogSoftmax) {
  Matrix logits(2, 3);
  logits(1, 0) = 1.0;
  logits(1, 2) = -1.0;
  mlm::MaskedSequence m;
  m.corrupted = {5, Vocab::kMask};
  m.targets = {1};
  m.originals = {2};
  const auto r = mlm::mlm_loss(logits, m);
  const double z = std::exp(1.0) + 1.0 + std::exp(-1.0);
  EXPECT_NEAR(r.sum, std::log(z) + 1.0, 1e-12);
  EXPECT_EQ(r.targets, 1u);
  EXPECT_EQ(r.grad(0, 0), 0.0);
  EXPECT_NEAR(r.grad(1, 2), std::exp(-1.0) / z - 1.0, 1e-12);
}

TEST(CorpusSequences, ChunksWithBoundaryMarkers) {
  const Vocab v({"a", "b", "c", "d"});
  // A chunk holding nothing maskable is dropped.
  const auto seqs = mlm::corpus_sequences(corpus_of({"a b c d", "zzz", "d"}), v, TokenizationMode::Latin, 4);
  ASSERT_EQ(seqs.size(), 3u);
  EXPECT_EQ(seqs[0], (std::vector<std::int32_t>{Vocab::kBos, 5, 6, Vocab::kEos}));
  EXPECT_EQ(seqs[1], (std::vector<std::int32_t>{Vocab::kBos, 7, 8, Vocab::kEos}));
  EXPECT_EQ(seqs[2], (std::vector<std::int32_t>{Vocab::kBos, 8, Vocab::kEos}));
}

// Default configuration apart from the learning rate; at 5e-5 fifty epochs
// barely move the loss.
TEST(Pretrain, MemorisesRepeatedSentence) {
  const std::string text = "the fire door shall be self-closing and latch in the closed position";
  const auto corpus = corpus_of(std::vector<std::string>(16, text));
  const auto vocab = build_vocab({tokenize(text, TokenizationMode::Latin)}, 1);
  encoder::EncoderConfig ec;
  ec.vocab_size = vocab.size();
  mlm::PretrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 5e-3;
  cfg.seed = 1;
  const auto r = mlm::pretrain(corpus, encoder::init_params(ec, 1), cfg, vocab);
  ASSERT_EQ(r.log.size(), 50u);
  EXPECT_LT(r.log.back().mean_loss, 0.1);
  EXPECT_LT(r.log.back().mean_loss, r.log.front().mean_loss);
}

TEST(Pretrain, IsDeterministicAndOnlyTouchesEncoderAndMlmHead) {
  const auto corpus = corpus_of({"fire door in the lobby", "gypsum board ceiling"});
  std::vector<std::vector<std::string>> toks;
  for (const auto& r : corpus.records) toks.push_back(tokenize(r.text, TokenizationMode::Latin));
  const auto vocab = build_vocab(toks, 1);
  encoder::EncoderConfig ec;
  ec.vocab_size = vocab.size();
  ec.num_tags = 3;
  ec.dim = 8;
  ec.hidden = 8;
  const auto init = encoder::init_params(ec, 2);
  mlm::PretrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 1e-2;
  cfg.seed = 9;
  const auto a = mlm::pretrain(corpus, init, cfg, vocab);
  const auto b = mlm::pretrain(corpus, init, cfg, vocab);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params.mixer_w, init.mixer_w);
  auto stored = init;
  encoder::round_to_storage(stored);
  EXPECT_EQ(a.params.emit_w, stored.emit_w);
  EXPECT_EQ(a.params.emit_b, stored.emit_b);
  cfg.epochs = 0;
  EXPECT_EQ(mlm::pretrain(corpus, init, cfg, vocab).params, init);
  EXPECT_THROW(mlm::pretrain(cote::CoteCorpus{}, init, cfg, vocab), std::invalid_argument);
}

TEST(Optim, AdamWFirstStepMovesByLearningRate) {
  Matrix p(1, 2), g(1, 2);
  p(0, 0) = 1.0;
  p(0, 1) = -2.0;
  g(0, 0) = 0.5;
  g(0, 1) = -3.0;
  optim::OptimizerState st(optim::AdamWConfig{0.9, 0.999, 1e-8, 0.1});
  optim::adamw_step({{"p", &p}}, {{"p", &g}}, st, 0.01);
  // Bias correction makes the first update lr * sign(g) up to eps.
  EXPECT_NEAR(p(0, 0), 1.0 * (1 - 0.001) - 0.01, 1e-9);
  EXPECT_NEAR(p(0, 1), -2.0 * (1 - 0.001) + 0.01, 1e-9);
  EXPECT_EQ(st.step, 1u);
  g(0, 0) = std::nan("");
  EXPECT_THROW(optim::adamw_step({{"p", &p}}, {{"p", &g}}, st, 0.01), optim::NonFiniteGradient);
}

TEST(Optim, LinearScheduleDecaysToZero) {
  EXPECT_DOUBLE_EQ(optim::linear_schedule(0, 10, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(optim::linear_schedule(5, 10, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(optim::linear_schedule(10, 10, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(optim::linear_schedule(1, 10, 1.0, 2), 0.5);
  EXPECT_DOUBLE_EQ(optim::linear_schedule(6, 10, 1.0, 2), 0.5);
  EXPECT_THROW(optim::linear_schedule(11, 10, 1.0), std::out_of_range);
  EXPECT_THROW(optim::linear_schedule(0, 0, 1.0), std::invalid_argument);
}
