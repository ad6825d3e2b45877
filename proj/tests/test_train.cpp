#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "elucid/checkpoint.hpp"
#include "elucid/synth.hpp"
#include "elucid/train.hpp"

using namespace elucid;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  DatasetSplit split;
  Vocab vocab;
  encoder::EncoderParams init;
};

Fixture make_fixture(std::size_t sentences, std::uint64_t seed) {
  Fixture f;
  const auto d = synth::separable_dataset(sentences, seed);
  f.split = split_dataset(d, {}, seed);
  std::vector<std::vector<std::string>> toks;
  for (const auto& ls : d.sentences) toks.push_back(ls.sentence.words());
  f.vocab = build_vocab(toks, 1);
  encoder::EncoderConfig c;
  c.vocab_size = f.vocab.size();
  c.dim = 16;
  c.hidden = 16;
  c.radius = 1;
  c.max_len = 32;
  f.init = encoder::init_params(c, seed);
  return f;
}

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("elucid_test_" + std::to_string(::getpid()) + "_" + name)).string();
}

}  // namespace

TEST(Finetune, ZeroEncoderRateFreezesTheBody) {
  auto f = make_fixture(40, 3);
  train::FinetuneConfig cfg;
  cfg.epochs = 2;
  cfg.encoder_lr = 0.0;
  cfg.seed = 5;
  const auto r = train::finetune(f.init, f.vocab, f.split.train, f.split.val, cfg);
  auto stored = f.init;
  encoder::round_to_storage(stored);
  EXPECT_EQ(r.model.encoder.token_emb, stored.token_emb);
  EXPECT_EQ(r.model.encoder.pos_emb, stored.pos_emb);
  EXPECT_EQ(r.model.encoder.mixer_w, stored.mixer_w);
  EXPECT_EQ(r.model.encoder.mixer_b, stored.mixer_b);
  EXPECT_EQ(r.model.encoder.config.num_tags, f.split.train.scheme.num_tags());
  bool moved = false;
  for (double v : r.model.crf.transitions.data()) moved = moved || v != 0.0;
  EXPECT_TRUE(moved);
}

TEST(Finetune, ZeroHeadRateFreezesEmissionsAndCrf) {
  auto f = make_fixture(40, 4);
  train::FinetuneConfig cfg;
  cfg.epochs = 1;
  cfg.encoder_lr = 1e-2;
  cfg.crf_lr = 0.0;
  cfg.seed = 5;
  const auto r = train::finetune(f.init, f.vocab, f.split.train, f.split.val, cfg);
  for (double v : r.model.crf.transitions.data()) EXPECT_EQ(v, 0.0);
  EXPECT_NE(r.model.encoder.mixer_w, f.init.mixer_w);
}

TEST(Finetune, LogsLearningRatesAndIsDeterministic) {
  auto f = make_fixture(40, 5);
  train::FinetuneConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  std::vector<train::FinetuneEpochLog> seen;
  const auto a = train::finetune(f.init, f.vocab, f.split.train, f.split.val, cfg, TokenizationMode::Latin,
                                 [&](const train::FinetuneEpochLog& e) { seen.push_back(e); });
  const auto b = train::finetune(f.init, f.vocab, f.split.train, f.split.val, cfg);
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_LE(seen[0].lr_encoder, 5e-5);
  EXPECT_LE(seen[0].lr_crf, 0.5);
  EXPECT_NEAR(seen[0].lr_crf / seen[0].lr_encoder, 1e4, 1e-6);
  EXPECT_EQ(a.model.encoder, b.model.encoder);
  EXPECT_EQ(a.model.crf.transitions, b.model.crf.transitions);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
}

TEST(Finetune, LearnsSeparableTask) {
  auto f = make_fixture(120, 6);
  train::FinetuneConfig cfg;
  cfg.epochs = 10;
  cfg.encoder_lr = 1e-2;
  cfg.seed = 1;
  const auto r = train::finetune(f.init, f.vocab, f.split.train, f.split.val, cfg);
  const auto pred = train::predict_dataset(r.model, f.split.test);
  const auto rep = eval::strict_match(eval::gold_table(f.split.test), pred, f.split.test.scheme);
  EXPECT_GE(rep.macro_f1, 0.9);
}

TEST(Finetune, RejectsBadConfigAndInputs) {
  auto f = make_fixture(40, 7);
  train::FinetuneConfig cfg;
  cfg.encoder_lr = 0.0;
  cfg.crf_lr = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  EXPECT_THROW(train::finetune(f.init, f.vocab, Dataset{}, f.split.val, cfg), std::invalid_argument);
  EXPECT_THROW(train::finetune(f.init, Vocab(), f.split.train, f.split.val, cfg), std::invalid_argument);
}

TEST(Predict, ConstrainedDecodingNeverEmitsOrphans) {
  auto f = make_fixture(40, 8);
  train::FinetuneConfig cfg;
  cfg.epochs = 1;
  cfg.constrained_decode = true;
  const auto r = train::finetune(f.init, f.vocab, f.split.train, f.split.val, cfg);
  EXPECT_TRUE(r.model.constrained_decode);
  for (const auto& ls : f.split.test.sentences) {
    const auto em = train::sentence_emissions(r.model, ls.sentence);
    const auto dec = crf::constrained_viterbi(em, r.model.crf, r.model.scheme);
    if (!dec.tags.empty()) EXPECT_TRUE(crf::bio_start_allowed(r.model.scheme, dec.tags.front()));
    for (std::size_t i = 1; i < dec.tags.size(); ++i)
      EXPECT_TRUE(crf::bio_transition_allowed(r.model.scheme, dec.tags[i - 1], dec.tags[i]));
  }
  auto long_sentence = make_sentence("long", std::vector<std::string>(40, "beam"));
  EXPECT_THROW(train::predict(r.model, long_sentence), std::length_error);
}

TEST(Checkpoint, ModelRoundTripIsExact) {
  auto f = make_fixture(40, 9);
  train::FinetuneConfig cfg;
  cfg.epochs = 1;
  cfg.crf_boundary = true;
  auto r = train::finetune(f.init, f.vocab, f.split.train, f.split.val, cfg);
  r.model.seed_lineage = {1, 2};
  const auto path = temp_path("model.ckpt");
  train::save_model(path, r.model);
  const auto back = train::load_model(path);
  EXPECT_EQ(back.encoder, r.model.encoder);
  EXPECT_EQ(back.crf.transitions, r.model.crf.transitions);
  EXPECT_TRUE(back.crf.boundary);
  EXPECT_EQ(back.crf.start, r.model.crf.start);
  EXPECT_EQ(back.scheme, r.model.scheme);
  EXPECT_EQ(back.vocab, r.model.vocab);
  EXPECT_EQ(back.seed_lineage, r.model.seed_lineage);
  EXPECT_EQ(train::predict_dataset(back, f.split.test), train::predict_dataset(r.model, f.split.test));
  EXPECT_THROW(train::load_encoder(path), checkpoint::FormatError);
  fs::remove(path);
}

TEST(Checkpoint, EncoderRoundTripAndCorruption) {
  auto f = make_fixture(40, 10);
  auto params = f.init;
  encoder::round_to_storage(params);
  const auto path = temp_path("encoder.ckpt");
  train::save_encoder(path, {params, f.vocab, TokenizationMode::Cjk, {4}});
  const auto back = train::load_encoder(path);
  EXPECT_EQ(back.params, params);
  EXPECT_EQ(back.vocab, f.vocab);
  EXPECT_EQ(back.tokenization, TokenizationMode::Cjk);
  EXPECT_THROW(train::load_model(path), checkpoint::FormatError);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    bytes = ss.str();
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write("NOTACKPT" + bytes.substr(8));
  EXPECT_THROW(train::load_encoder(path), checkpoint::FormatError);
  write(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(train::load_encoder(path), checkpoint::FormatError);
  write(bytes.substr(0, 20));
  EXPECT_THROW(train::load_encoder(path), checkpoint::FormatError);
  fs::remove(path);
}

TEST(Checkpoint, ContainerStoresFloat32) {
  Matrix m(1, 2);
  m(0, 0) = 0.1;
  m(0, 1) = -3.0;
  std::stringstream ss;
  checkpoint::write(ss, {{"kind", "x"}}, {{"m", &m}});
  const auto c = checkpoint::read(ss);
  EXPECT_EQ(c.header["kind"], "x");
  EXPECT_EQ(c.get("m")(0, 0), static_cast<double>(0.1f));
  EXPECT_EQ(c.get("m")(0, 1), -3.0);
  EXPECT_TRUE(c.has("m"));
  EXPECT_THROW(c.get("n"), checkpoint::FormatError);
}

TEST(Synth, SeparableDatasetMapsEachWordToOneTag) {
  const auto d = synth::separable_dataset(200, 4);
  EXPECT_EQ(d.size(), 200u);
  EXPECT_EQ(d.scheme.num_types(), 3u);
  std::map<std::string, std::string> tag_of;
  for (const auto& ls : d.sentences) {
    const auto words = ls.sentence.words();
    std::vector<std::string> tags(words.size(), "O");
    for (const auto& s : ls.spans)
      for (std::size_t i = s.start; i < s.end; ++i) tags[i] = s.etype;
    for (std::size_t i = 0; i < words.size(); ++i) {
      auto [it, fresh] = tag_of.emplace(words[i], tags[i]);
      EXPECT_EQ(it->second, tags[i]) << words[i];
    }
  }
  EXPECT_EQ(format_dataset(d), format_dataset(synth::separable_dataset(200, 4)));
}

TEST(Synth, CueTaskSourceCoversEveryEntityWord) {
  synth::CueTaskConfig cfg;
  cfg.sentences = 60;
  cfg.tail_words = 10;
  cfg.seed = 2;
  const auto d = synth::cue_task_dataset(cfg);
  const auto src = synth::cue_task_source(cfg, 2, 3);
  EXPECT_EQ(d.size(), 60u);
  EXPECT_EQ(src.size(), 3u * (8 + 10) * 2);
  std::set<std::string> covered;
  for (const auto& ls : src.sentences) {
    ASSERT_EQ(ls.spans.size(), 1u);
    covered.insert(ls.sentence.tokens[ls.spans[0].start].text);
  }
  for (const auto& ls : d.sentences)
    for (const auto& s : ls.spans) EXPECT_TRUE(covered.count(ls.sentence.tokens[s.start].text));
}
