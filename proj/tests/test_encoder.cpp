#include <gtest/gtest.h>

#include <cmath>

#include "elucid/crf.hpp"
#include "elucid/encoder.hpp"
#include "elucid/mlm.hpp"
#include "oracles.hpp"

using namespace elucid;
using encoder::EncoderConfig;
using encoder::EncoderParams;

namespace {

EncoderConfig tiny_config(Rng& rng) {
  EncoderConfig c;
  c.vocab_size = 6 + rng.below(7);
  c.dim = 1 + rng.below(8);
  c.hidden = 1 + rng.below(8);
  c.radius = rng.below(3);
  c.num_tags = 3 + 2 * rng.below(2);
  c.dropout = rng.below(2) == 0 ? 0.0 : 0.3;
  c.max_len = 8;
  return c;
}

// Larger than init scale so tanh is exercised away from its linear regime.
EncoderParams random_params(const EncoderConfig& c, Rng& rng) {
  EncoderParams p = EncoderParams::zeros(c);
  for (auto& t : p.tensors())
    for (auto& v : t.tensor->data()) v = rng.uniform(-0.8, 0.8);
  return p;
}

std::vector<std::int32_t> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::int32_t> ids(n);
  for (auto& id : ids) id = static_cast<std::int32_t>(Vocab::kNumReserved + rng.below(vocab - Vocab::kNumReserved));
  return ids;
}

}  // namespace

TEST(Encoder, InitIsDeterministicAndBounded) {
  EncoderConfig c;
  c.vocab_size = 20;
  c.num_tags = 5;
  const auto a = encoder::init_params(c, 7);
  EXPECT_EQ(a, encoder::init_params(c, 7));
  EXPECT_NE(a, encoder::init_params(c, 8));
  for (std::size_t k = 0; k < c.dim; ++k) EXPECT_EQ(a.token_emb(Vocab::kPad, k), 0.0);
  for (const auto& t : a.tensors())
    for (double v : t.tensor->data()) EXPECT_LT(std::abs(v), 0.05);
  for (double v : a.mixer_b.data()) EXPECT_EQ(v, 0.0);
  for (double v : a.mlm_b.data()) EXPECT_EQ(v, 0.0);
  for (double v : a.emit_b.data()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, DegenerateWindowMatchesFormula) {
  EncoderConfig c;
  c.vocab_size = 7;
  c.dim = 3;
  c.hidden = 2;
  c.radius = 0;
  c.num_tags = 3;
  Rng rng(1);
  auto p = random_params(c, rng);
  const auto st = encoder::encode(p, {5}, false, 0);
  ASSERT_EQ(st.hidden.rows(), 1u);
  ASSERT_EQ(st.hidden.cols(), 2u);
  for (std::size_t j = 0; j < 2; ++j) {
    double a = p.mixer_b(0, j);
    for (std::size_t k = 0; k < 3; ++k) a += p.mixer_w(k, j) * (p.token_emb(5, k) + p.pos_emb(0, k));
    EXPECT_NEAR(st.hidden(0, j), std::tanh(a), 1e-14);
  }
}

TEST(Encoder, OutOfRangeNeighboursReadThePadRow) {
  EncoderConfig c;
  c.vocab_size = 9;
  c.dim = 2;
  c.hidden = 3;
  c.radius = 1;
  c.num_tags = 3;
  Rng rng(2);
  auto p = random_params(c, rng);
  const auto st = encoder::encode(p, {5, 6, 7}, false, 0);
  // Position 0 consumes (PAD, t0, t1).
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(st.inputs(0, k), p.token_emb(Vocab::kPad, k));
    EXPECT_EQ(st.inputs(0, 2 + k), p.token_emb(5, k) + p.pos_emb(0, k));
    EXPECT_EQ(st.inputs(0, 4 + k), p.token_emb(6, k) + p.pos_emb(1, k));
    EXPECT_EQ(st.inputs(2, 4 + k), p.token_emb(Vocab::kPad, k));
  }
}

TEST(Encoder, InferenceIsBitwiseRepeatable) {
  Rng rng(3);
  const auto c = tiny_config(rng);
  auto p = random_params(c, rng);
  const auto ids = random_ids(rng, 5, c.vocab_size);
  EXPECT_EQ(encoder::encode(p, ids, false, 1).hidden, encoder::encode(p, ids, false, 2).hidden);
  EXPECT_EQ(encoder::encode(p, ids, true, 4).hidden, encoder::encode(p, ids, true, 4).hidden);
}

TEST(Encoder, ZeroHiddenGivesBiasRows) {
  Rng rng(4);
  const auto c = tiny_config(rng);
  auto p = random_params(c, rng);
  Matrix h(3, c.hidden);
  const auto logits = encoder::mlm_logits(p, h);
  const auto em = encoder::emissions(p, h);
  ASSERT_EQ(logits.cols(), c.vocab_size);
  ASSERT_EQ(em.cols(), c.num_tags);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t v = 0; v < c.vocab_size; ++v) EXPECT_EQ(logits(i, v), p.mlm_b(0, v));
    for (std::size_t t = 0; t < c.num_tags; ++t) EXPECT_EQ(em(i, t), p.emit_b(0, t));
  }
}

TEST(Encoder, RejectsBadInputs) {
  EncoderConfig c;
  c.vocab_size = 10;
  c.num_tags = 3;
  c.max_len = 4;
  const auto p = encoder::init_params(c, 0);
  EXPECT_THROW(encoder::encode(p, {5, 5, 5, 5, 5}, false, 0), std::length_error);
  EXPECT_THROW(encoder::encode(p, {5, 10}, false, 0), std::out_of_range);
  EXPECT_THROW(encoder::mlm_logits(p, Matrix(2, c.hidden + 1)), std::invalid_argument);
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Encoder, ZeroUpstreamGradientGivesZeroGradients) {
  Rng rng(5);
  const auto c = tiny_config(rng);
  auto p = random_params(c, rng);
  const auto st = encoder::encode(p, random_ids(rng, 4, c.vocab_size), true, 9);
  Matrix zl(4, c.vocab_size), ze(4, c.num_tags);
  const auto g = encoder::backward(p, st, {&zl, &ze});
  for (const auto& t : g.tensors())
    for (double v : t.tensor->data()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, PadRowGradientIsZeroWhenPadNeverRead) {
  Rng rng(6);
  auto c = tiny_config(rng);
  c.radius = 0;
  auto p = random_params(c, rng);
  const auto st = encoder::encode(p, random_ids(rng, 5, c.vocab_size), false, 0);
  Matrix up = oracle::random_matrix(rng, 5, c.vocab_size, -1.0, 1.0);
  const auto g = encoder::backward(p, st, {&up, nullptr});
  for (std::size_t k = 0; k < c.dim; ++k) EXPECT_EQ(g.token_emb(Vocab::kPad, k), 0.0);
}

// Every parameter of the encoder, checked through the MLM loss and through a
// CRF NLL on the emission head, with dropout active under a fixed seed.
TEST(Encoder, GradientsMatchFiniteDifferences) {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = tiny_config(rng);
    auto p = random_params(c, rng);
    const std::size_t n = 1 + rng.below(6);
    const auto ids = random_ids(rng, n, c.vocab_size);
    const std::uint64_t seed = 100 + trial;

    mlm::MaskedSequence masked;
    masked.corrupted = ids;
    for (std::size_t i = 0; i < n; ++i)
      if (i == 0 || rng.uniform() < 0.5) {
        masked.targets.push_back(i);
        masked.originals.push_back(ids[i]);
        masked.corrupted[i] = Vocab::kMask;
      }
    TagSequence gold(n);
    for (auto& t : gold) t = rng.below(c.num_tags);
    crf::CrfParams cp(c.num_tags);
    cp.transitions = oracle::random_matrix(rng, c.num_tags, c.num_tags, -1.0, 1.0);

    auto total = [&] {
      const auto st = encoder::encode(p, masked.corrupted, true, seed);
      return mlm::mlm_loss(encoder::mlm_logits(p, st.hidden), masked).sum +
             crf::crf_nll(encoder::emissions(p, st.hidden), cp, gold).loss;
    };

    const auto st = encoder::encode(p, masked.corrupted, true, seed);
    const auto lg = mlm::mlm_loss(encoder::mlm_logits(p, st.hidden), masked).grad;
    const auto eg = crf::crf_nll(encoder::emissions(p, st.hidden), cp, gold).grad_emissions;
    const auto grads = encoder::backward(p, st, {&lg, &eg});

    auto pt = p.tensors();
    const auto gt = grads.tensors();
    for (std::size_t k = 0; k < pt.size(); ++k) {
      for (std::size_t i = 0; i < pt[k].tensor->size(); ++i) {
        const double numeric = oracle::central_difference((*pt[k].tensor)[i], total);
        EXPECT_PRED2(oracle::grad_close, (*gt[k].tensor)[i], numeric)
            << "trial " << trial << " tensor " << pt[k].name << " entry " << i;
      }
    }
  }
}

TEST(Encoder, AccumulateBackwardAddsIntoBuffer) {
  Rng rng(7);
  const auto c = tiny_config(rng);
  auto p = random_params(c, rng);
  const auto st = encoder::encode(p, random_ids(rng, 4, c.vocab_size), false, 0);
  Matrix up = oracle::random_matrix(rng, 4, c.num_tags, -1.0, 1.0);
  const auto once = encoder::backward(p, st, {nullptr, &up});
  auto acc = EncoderParams::zeros(c);
  encoder::accumulate_backward(p, st, {nullptr, &up}, acc);
  encoder::accumulate_backward(p, st, {nullptr, &up}, acc);
  const auto a = acc.tensors();
  const auto o = once.tensors();
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].tensor->size(); ++i) EXPECT_NEAR((*a[k].tensor)[i], 2.0 * (*o[k].tensor)[i], 1e-12);
}
