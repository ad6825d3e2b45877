#include "elucid/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "elucid/checkpoint.hpp"
#include "elucid/rng.hpp"

namespace elucid::cli {

namespace fs = std::filesystem;

namespace {

// Seed streams derived from the global seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kPretrainStream = 2;
constexpr std::uint64_t kFinetuneStream = 3;

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw CliError("missing_input", what + " path not set");
  if (!fs::is_regular_file(path)) throw CliError("missing_input", what + " not found: " + path);
}

std::string read_text(const std::string& path, const std::string& what) {
  require_file(path, what);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in && !in.eof()) throw CliError("io_error", "cannot read " + what + ": " + path);
  return ss.str();
}

// Writes through a temporary so a failed run never leaves a truncated file.
void write_text(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CliError("io_error", "cannot write " + path);
    out << content;
    if (!out) throw CliError("io_error", "write failed for " + path);
  }
  fs::rename(tmp, path);
}

Dataset load_dataset_checked(const std::string& path) {
  require_file(path, "dataset");
  return load_dataset(path);
}

cote::CoteCorpus load_corpus(const std::string& path) {
  return cote::read_corpus(read_text(path, "corpus"));
}

std::vector<std::vector<std::string>> corpus_tokens(const cote::CoteCorpus& c, TokenizationMode mode) {
  std::vector<std::vector<std::string>> out;
  out.reserve(c.records.size());
  for (const auto& r : c.records) out.push_back(tokenize(r.text, mode));
  return out;
}

// Vocabulary over the elucidation corpus plus, when configured, the dataset's
// tokens, so fine-tuning inputs are not all unknown.
Vocab build_run_vocab(const RunConfig& cfg, const cote::CoteCorpus* corpus, const Dataset* data) {
  auto tokens = corpus ? corpus_tokens(*corpus, cfg.tokenization) : std::vector<std::vector<std::string>>{};
  if (data)
    for (const auto& ls : data->sentences) tokens.push_back(ls.sentence.words());
  return build_vocab(tokens, cfg.min_count);
}

encoder::EncoderConfig sized_config(const RunConfig& cfg, const Vocab& v, std::size_t num_tags) {
  auto c = cfg.encoder_config;
  c.vocab_size = v.size();
  c.num_tags = num_tags;
  c.validate();
  return c;
}

const Dataset& pick_split(const DatasetSplit& s, const Dataset& all, const std::string& which) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  if (which == "all") return all;
  throw CliError("config_error", "unknown split '" + which + "' (expected train, val, test or all)");
}

std::vector<std::string> sentence_order(const Dataset& d) {
  std::vector<std::string> ids;
  for (const auto& ls : d.sentences) ids.push_back(ls.sentence.id);
  return ids;
}

nlohmann::json report_document(const std::vector<eval::NamedResult>& rows, const eval::RenderedReport& rendered) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json one = {{"name", r.name}, {"strict", eval::to_json(r.strict)}};
    if (r.partial) one["partial"] = eval::to_json(*r.partial);
    reports.push_back(one);
  }
  return {{"table", rendered.json}, {"reports", reports}};
}

std::string pct_label(double f) {
  const double v = f * 100.0;
  char buf[32];
  if (std::abs(v - std::round(v)) < 1e-9)
    std::snprintf(buf, sizeof buf, "%d%%", static_cast<int>(std::lround(v)));
  else
    std::snprintf(buf, sizeof buf, "%.2f%%", v);
  return buf;
}

std::string dir_label(double f) {
  std::string s = pct_label(f);
  s.pop_back();
  for (auto& c : s)
    if (c == '.') c = '_';
  return "p" + s;
}

struct LoadedEncoder {
  encoder::EncoderParams params;
  Vocab vocab;
  TokenizationMode tokenization = TokenizationMode::Latin;
  std::vector<std::uint64_t> lineage;
};

LoadedEncoder fresh_encoder(const RunConfig& cfg, const Dataset& data) {
  std::optional<cote::CoteCorpus> corpus;
  const std::string cpath = cfg.corpus_path();
  if (!cfg.corpus.empty() || fs::is_regular_file(cpath)) corpus = load_corpus(cpath);
  LoadedEncoder e;
  e.vocab = build_run_vocab(cfg, corpus ? &*corpus : nullptr, &data);
  e.tokenization = cfg.tokenization;
  e.lineage = {cfg.seed};
  e.params = encoder::init_params(sized_config(cfg, e.vocab, 0), derive_seed(cfg.seed, {kInitStream}));
  return e;
}

LoadedEncoder checkpoint_encoder(const std::string& path, const Dataset& data) {
  require_file(path, "encoder checkpoint");
  const auto c = checkpoint::read_file(path);
  const auto kind = c.header.value("kind", std::string());
  LoadedEncoder e;
  if (kind == "ner_model") {
    auto m = train::load_model(path);
    if (!(m.scheme == data.scheme)) {
      std::string have, want;
      for (const auto& t : m.scheme.types()) have += (have.empty() ? "" : ",") + t;
      for (const auto& t : data.scheme.types()) want += (want.empty() ? "" : ",") + t;
      throw CliError("scheme_mismatch", "checkpoint " + path + " has entity types [" + have + "], dataset has [" +
                                            want + "]");
    }
    e.params = std::move(m.encoder);
    e.vocab = std::move(m.vocab);
    e.tokenization = m.tokenization;
    e.lineage = std::move(m.seed_lineage);
  } else {
    auto ck = train::load_encoder(path);
    e.params = std::move(ck.params);
    e.vocab = std::move(ck.vocab);
    e.tokenization = ck.tokenization;
    e.lineage = std::move(ck.seed_lineage);
  }
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (out_dir.empty()) throw CliError("config_error", "out-dir must not be empty");
  if (!(corpus_fraction > 0.0 && corpus_fraction <= 1.0))
    throw CliError("config_error", "corpus-fraction must lie in (0, 1]");
  if (cote_split != "all" && cote_split != "train")
    throw CliError("config_error", "cote-split must be 'all' or 'train'");
  for (double f : scale_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw CliError("config_error", "scale fractions must lie in (0, 1]");
  try {
    endpoint.validate();
    pretrain.validate();
    finetune.validate();
    auto e = encoder_config;
    e.vocab_size = std::max<std::size_t>(e.vocab_size, Vocab::kNumReserved);
    e.validate();
  } catch (const std::invalid_argument& ex) {
    throw CliError("config_error", ex.what());
  }
}

std::string RunConfig::corpus_path() const {
  return corpus.empty() ? join(out_dir, "cote_" + cote::to_string(strategy) + ".jsonl") : corpus;
}
std::string RunConfig::encoder_path() const { return encoder.empty() ? join(out_dir, "encoder.ckpt") : encoder; }
std::string RunConfig::model_path() const { return model.empty() ? join(out_dir, "model.ckpt") : model; }

// ---------------------------------------------------------------------------
// generate-cote

GenerateOutput cmd_generate_cote(const RunConfig& cfg, const Logger& log) {
  if (cfg.mock) {
    cote::MockChatBackend backend;
    return cmd_generate_cote(cfg, log, backend);
  }
  cote::HttpChatBackend backend;
  return cmd_generate_cote(cfg, log, backend);
}

GenerateOutput cmd_generate_cote(const RunConfig& cfg, const Logger& log, cote::ChatBackend& backend) {
  cfg.validate();
  const Dataset all = load_dataset_checked(cfg.dataset);
  for (const auto& w : all.warnings) log.warn("dataset_repair", {{"detail", w}});
  const Dataset source = cfg.cote_split == "train" ? split_dataset(all, {}, cfg.seed).train : all;

  const auto strategy = cfg.prompt_template.empty() ? cote::PromptStrategy::defaults(cfg.strategy)
                                                    : cote::PromptStrategy(cfg.strategy, cfg.prompt_template);
  auto endpoint = cfg.endpoint;
  if (cfg.mock) endpoint.backoff_base = std::chrono::milliseconds(0);

  GenerateOutput out;
  out.corpus_path = cfg.corpus_path();
  log.info("cote_start", {{"dataset", cfg.dataset},
                          {"sentences", source.size()},
                          {"entities", source.entity_count()},
                          {"strategy", cote::to_string(cfg.strategy)},
                          {"endpoint", cfg.mock ? std::string("mock") : endpoint.base_url}});
  cote::BuildResult built;
  try {
    built = cote::build_corpus(source, strategy, endpoint, backend, cfg.tokenization);
  } catch (const cote::CorpusAbort& e) {
    for (const auto& s : e.summary.skip_log) log.warn("cote_skip", {{"detail", s}});
    std::error_code ec;
    fs::remove(out.corpus_path + ".tmp", ec);
    throw CliError("corpus_abort", e.what());
  }
  for (const auto& s : built.summary.skip_log) log.warn("cote_skip", {{"detail", s}});

  write_text(out.corpus_path, cote::write_corpus(built.corpus));
  const nlohmann::json meta = {{"dataset_fingerprint", built.corpus.fingerprint},
                               {"strategy", cote::to_string(built.corpus.strategy)},
                               {"records", built.corpus.size()}};
  write_text(out.corpus_path + ".meta.json", meta.dump(2) + "\n");
  out.summary = built.summary;
  log.info("cote_done", {{"corpus", out.corpus_path}, {"records", built.summary.records}});
  return out;
}

// ---------------------------------------------------------------------------
// pretrain

std::string cmd_pretrain(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  const std::string cpath = cfg.corpus_path();
  const auto full = load_corpus(cpath);
  std::optional<Dataset> data;
  if (!cfg.dataset.empty()) data = load_dataset_checked(cfg.dataset);

  LoadedEncoder start;
  if (!cfg.resume.empty()) {
    require_file(cfg.resume, "resume checkpoint");
    auto ck = train::load_encoder(cfg.resume);
    start = {std::move(ck.params), std::move(ck.vocab), ck.tokenization, std::move(ck.seed_lineage)};
  } else {
    start.vocab = build_run_vocab(cfg, &full, data ? &*data : nullptr);
    start.tokenization = cfg.tokenization;
    start.lineage = {cfg.seed};
    start.params = encoder::init_params(sized_config(cfg, start.vocab, 0), derive_seed(cfg.seed, {kInitStream}));
  }

  const auto corpus = cfg.corpus_fraction < 1.0 ? cote::subset_corpus(full, cfg.corpus_fraction, cfg.seed) : full;
  auto pc = cfg.pretrain;
  pc.seed = derive_seed(cfg.seed, {kPretrainStream});
  log.info("pretrain_start", {{"corpus", cpath},
                              {"records", corpus.size()},
                              {"corpus_fraction", cfg.corpus_fraction},
                              {"vocab_size", start.vocab.size()},
                              {"epochs", pc.epochs},
                              {"lr", pc.learning_rate}});

  std::string run_log;
  auto result = mlm::pretrain(corpus, start.params, pc, start.vocab, start.tokenization, [&](const mlm::EpochLog& e) {
    nlohmann::json j = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"examples_seen", e.examples_seen},
                        {"wall_ms", e.wall_ms}};
    log.info("pretrain_epoch", j);
    run_log += j.dump() + "\n";
  });

  train::EncoderCheckpoint ck{std::move(result.params), start.vocab, start.tokenization, start.lineage};
  ck.seed_lineage.push_back(pc.seed);
  const std::string path = cfg.encoder_path();
  try {
    train::save_encoder(path, ck);
  } catch (const std::ios_base::failure& e) {
    throw CliError("io_error", std::string("cannot write checkpoint: ") + e.what());
  }
  write_text(join(fs::path(path).parent_path(), "pretrain_log.jsonl"), run_log);
  log.info("pretrain_done", {{"checkpoint", path}});
  return path;
}

// ---------------------------------------------------------------------------
// finetune

FinetuneOutput cmd_finetune(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  const Dataset all = load_dataset_checked(cfg.dataset);
  for (const auto& w : all.warnings) log.warn("dataset_repair", {{"detail", w}});
  const auto split = split_dataset(all, {}, cfg.seed);

  LoadedEncoder start = cfg.no_pretrain ? fresh_encoder(cfg, all) : checkpoint_encoder(cfg.encoder_path(), all);
  auto fc = cfg.finetune;
  fc.seed = derive_seed(cfg.seed, {kFinetuneStream});
  log.info("finetune_start", {{"dataset", cfg.dataset},
                              {"train", split.train.size()},
                              {"val", split.val.size()},
                              {"test", split.test.size()},
                              {"pretrained", !cfg.no_pretrain},
                              {"encoder_lr", fc.encoder_lr},
                              {"crf_lr", fc.crf_lr}});

  std::string run_log;
  auto result = train::finetune(start.params, start.vocab, split.train, split.val, fc, start.tokenization,
                                [&](const train::FinetuneEpochLog& e) {
                                  nlohmann::json j = {{"epoch", e.epoch},
                                                      {"train_nll", e.train_nll},
                                                      {"val_macro_f1", e.val_macro_f1},
                                                      {"lr_encoder", e.lr_encoder},
                                                      {"lr_crf", e.lr_crf}};
                                  log.info("finetune_epoch", j);
                                  run_log += j.dump() + "\n";
                                });
  auto& model = result.model;
  model.seed_lineage = start.lineage;
  model.seed_lineage.push_back(fc.seed);

  FinetuneOutput out;
  out.model_path = cfg.model_path();
  out.best_epoch = result.best_epoch;
  train::save_model(out.model_path, model);

  const auto gold = eval::gold_table(split.test);
  const auto pred = train::predict_dataset(model, split.test);
  out.strict = eval::strict_match(gold, pred, all.scheme);
  out.partial = eval::partial_match(gold, pred, all.scheme);

  const fs::path dir = fs::path(out.model_path).parent_path();
  std::vector<eval::NamedResult> rows{{cfg.no_pretrain ? "no-pretrain" : "pretrained", out.strict, out.partial}};
  const auto rendered = eval::emit_report(rows);
  auto doc = report_document(rows, rendered);
  doc["best_epoch"] = result.best_epoch;
  doc["model"] = fs::path(out.model_path).filename().string();
  out.report_path = join(dir, "report.json");
  write_text(out.report_path, doc.dump(2) + "\n");
  write_text(join(dir, "report.txt"), rendered.text);
  write_text(join(dir, "test_predictions.jsonl"), eval::write_predictions(pred, sentence_order(split.test)));
  write_text(join(dir, "finetune_log.jsonl"), run_log);
  log.info("finetune_done", {{"model", out.model_path},
                             {"best_epoch", result.best_epoch},
                             {"strict_macro_f1", out.strict.macro_f1},
                             {"partial_macro_f1", out.partial.macro_f1}});
  return out;
}

// ---------------------------------------------------------------------------
// evaluate

TableOutput cmd_evaluate(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  const Dataset all = load_dataset_checked(cfg.dataset);
  const auto split = split_dataset(all, {}, cfg.seed);
  const Dataset& target = pick_split(split, all, cfg.eval_split);

  eval::SpanTable pred;
  std::string name;
  if (!cfg.predictions.empty()) {
    pred = eval::read_predictions(read_text(cfg.predictions, "predictions file"));
    name = fs::path(cfg.predictions).stem().string();
  } else {
    const std::string mpath = cfg.model_path();
    require_file(mpath, "model checkpoint");
    const auto model = train::load_model(mpath);
    if (!(model.scheme == all.scheme))
      throw CliError("scheme_mismatch", "model " + mpath + " was trained on a different entity type set");
    pred = train::predict_dataset(model, target);
    name = fs::path(mpath).stem().string();
  }
  const auto gold = eval::gold_table(target);
  std::vector<eval::NamedResult> rows{
      {name, eval::strict_match(gold, pred, all.scheme), eval::partial_match(gold, pred, all.scheme)}};
  const auto rendered = eval::emit_report(rows);
  TableOutput out{rendered.text, report_document(rows, rendered)};
  out.json["split"] = cfg.eval_split;
  const std::string path = cfg.output.empty() ? join(cfg.out_dir, "eval_report.json") : cfg.output;
  write_text(path, out.json.dump(2) + "\n");
  log.info("evaluate_done", {{"report", path}, {"strict_macro_f1", rows[0].strict.macro_f1}});
  return out;
}

// ---------------------------------------------------------------------------
// ablate and scale: compositions of pretrain + finetune

TableOutput cmd_ablate(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  const std::vector<std::pair<cote::Strategy, std::string>> variants = {
      {cote::Strategy::Explain, cfg.corpus_explain}, {cote::Strategy::Think, cfg.corpus_think},
      {cote::Strategy::Role, cfg.corpus_role}};
  std::vector<std::string> paths, missing;
  for (const auto& [s, given] : variants) {
    const std::string p = given.empty() ? join(cfg.out_dir, "cote_" + cote::to_string(s) + ".jsonl") : given;
    if (!fs::is_regular_file(p)) missing.push_back(cote::to_string(s) + " (" + p + ")");
    paths.push_back(p);
  }
  if (!missing.empty()) {
    std::string m;
    for (const auto& x : missing) m += (m.empty() ? "" : ", ") + x;
    throw CliError("missing_input", "missing corpus variants: " + m);
  }

  std::vector<eval::NamedResult> rows;
  for (std::size_t k = 0; k < variants.size(); ++k) {
    RunConfig sub = cfg;
    sub.corpus = paths[k];
    sub.out_dir = join(fs::path(cfg.out_dir) / "ablate", cote::to_string(variants[k].first));
    sub.encoder.clear();
    sub.model.clear();
    sub.no_pretrain = false;
    log.info("ablate_variant", {{"variant", cote::to_string(variants[k].first)}, {"corpus", sub.corpus}});
    cmd_pretrain(sub, log);
    auto ft = cmd_finetune(sub, log);
    rows.push_back({cote::to_string(variants[k].first), ft.strict, ft.partial});
  }
  const auto rendered = eval::emit_report(rows);
  TableOutput out{rendered.text, report_document(rows, rendered)};
  write_text(join(cfg.out_dir, "ablation.json"), out.json.dump(2) + "\n");
  write_text(join(cfg.out_dir, "ablation.txt"), out.text);
  return out;
}

TableOutput cmd_scale(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  require_file(cfg.corpus_path(), "corpus");
  auto fractions = cfg.scale_fractions;
  std::sort(fractions.begin(), fractions.end());

  std::ostringstream text;
  text << "Fraction | Strict Macro-F1 | Partial Macro-F1\n";
  text << "---------+-----------------+-----------------\n";
  auto rows = nlohmann::json::array();
  for (double f : fractions) {
    RunConfig sub = cfg;
    sub.corpus = cfg.corpus_path();
    sub.corpus_fraction = f;
    sub.out_dir = join(fs::path(cfg.out_dir) / "scale", dir_label(f));
    sub.encoder.clear();
    sub.model.clear();
    sub.no_pretrain = false;
    log.info("scale_fraction", {{"fraction", f}});
    cmd_pretrain(sub, log);
    auto ft = cmd_finetune(sub, log);
    char line[128];
    std::snprintf(line, sizeof line, "%-8s | %15s | %16s\n", pct_label(f).c_str(),
                  eval::percent(ft.strict.macro_f1).c_str(), eval::percent(ft.partial.macro_f1).c_str());
    text << line;
    rows.push_back({{"fraction", f},
                    {"label", pct_label(f)},
                    {"strict_macro_f1", ft.strict.macro_f1},
                    {"partial_macro_f1", ft.partial.macro_f1},
                    {"strict_macro_f1_pct", eval::percent(ft.strict.macro_f1)},
                    {"partial_macro_f1_pct", eval::percent(ft.partial.macro_f1)}});
  }
  TableOutput out{text.str(), {{"rows", rows}}};
  write_text(join(cfg.out_dir, "scaling.json"), out.json.dump(2) + "\n");
  write_text(join(cfg.out_dir, "scaling.txt"), out.text);
  return out;
}

// ---------------------------------------------------------------------------
// predict

std::string cmd_predict(const RunConfig& cfg, const Logger& log) {
  cfg.validate();
  const std::string mpath = cfg.model_path();
  require_file(mpath, "model checkpoint");
  const auto model = train::load_model(mpath);
  const std::string text = read_text(cfg.input, "input file");

  eval::SpanTable table;
  std::vector<std::string> order;
  std::size_t line_no = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto words = tokenize(line, model.tokenization);
    if (words.size() > model.encoder.config.max_len)
      throw CliError("input_too_long", "line " + std::to_string(line_no) + " has " + std::to_string(words.size()) +
                                           " tokens, above max_len " +
                                           std::to_string(model.encoder.config.max_len));
    std::string id = std::to_string(line_no);
    id = "line-" + std::string(id.size() < 6 ? 6 - id.size() : 0, '0') + id;
    table[id] = words.empty() ? std::vector<EntitySpan>{} : train::predict(model, make_sentence(id, words));
    order.push_back(id);
  }
  const std::string path = cfg.output.empty() ? join(cfg.out_dir, "predictions.jsonl") : cfg.output;
  write_text(path, eval::write_predictions(table, order));
  log.info("predict_done", {{"lines", line_no}, {"output", path}});
  return path;
}

// ---------------------------------------------------------------------------
// command line

namespace {

struct Flags {
  std::string strategy = "explain";
  std::string tokenization = "latin";
  long timeout_ms = 60000;
  long backoff_ms = 500;
  bool no_early_stopping = false;
};

void add_options(CLI::App& app, RunConfig& c, Flags& f) {
  app.add_option("--dataset", c.dataset, "CoNLL-style dataset (token<TAB>BIO tag)");
  app.add_option("--corpus", c.corpus, "Elucidation corpus JSONL (default: <out-dir>/cote_<strategy>.jsonl)");
  app.add_option("--encoder", c.encoder, "Encoder checkpoint (default: <out-dir>/encoder.ckpt)");
  app.add_option("--model", c.model, "Model checkpoint (default: <out-dir>/model.ckpt)");
  app.add_option("--input", c.input, "Text file to tag, one sentence per line");
  app.add_option("--predictions", c.predictions, "Prediction JSONL to score instead of running a model");
  app.add_option("--corpus-explain", c.corpus_explain, "Corpus for the explain variant");
  app.add_option("--corpus-think", c.corpus_think, "Corpus for the think variant");
  app.add_option("--corpus-role", c.corpus_role, "Corpus for the role variant");
  app.add_option("--out-dir", c.out_dir, "Directory for artifacts")->capture_default_str();
  app.add_option("--output", c.output, "Explicit output file for predict/evaluate");
  app.add_option("--seed", c.seed, "Global seed")->capture_default_str();
  app.add_flag("--mock", c.mock, "Use the deterministic offline endpoint");
  app.add_option("--tokenization", f.tokenization, "latin or cjk")->capture_default_str();

  app.add_option("--strategy", f.strategy, "explain, think or role")->capture_default_str();
  app.add_option("--prompt-template", c.prompt_template, "Template with {sentence}, {span} and {type}");
  app.add_option("--cote-split", c.cote_split, "Generate for all sentences or the training split only")
      ->capture_default_str();
  app.add_option("--endpoint", c.endpoint.base_url, "Chat endpoint base URL")->capture_default_str();
  app.add_option("--chat-model", c.endpoint.model, "Model name sent to the endpoint")->capture_default_str();
  app.add_option("--temperature", c.endpoint.temperature)->capture_default_str();
  app.add_option("--max-tokens", c.endpoint.max_tokens)->capture_default_str();
  app.add_option("--timeout-ms", f.timeout_ms)->capture_default_str();
  app.add_option("--max-parallel", c.endpoint.max_parallel)->capture_default_str();
  app.add_option("--retries", c.endpoint.retry_budget, "Extra attempts for transient failures")
      ->capture_default_str();
  app.add_option("--backoff-ms", f.backoff_ms)->capture_default_str();

  app.add_option("--dim", c.encoder_config.dim)->capture_default_str();
  app.add_option("--hidden", c.encoder_config.hidden)->capture_default_str();
  app.add_option("--radius", c.encoder_config.radius)->capture_default_str();
  app.add_option("--dropout", c.encoder_config.dropout)->capture_default_str();
  app.add_option("--max-len", c.encoder_config.max_len)->capture_default_str();
  app.add_option("--min-count", c.min_count, "Minimum token count for the vocabulary")->capture_default_str();

  app.add_option("--pretrain-epochs", c.pretrain.epochs)->capture_default_str();
  app.add_option("--pretrain-batch-size", c.pretrain.batch_size)->capture_default_str();
  app.add_option("--pretrain-lr", c.pretrain.learning_rate)->capture_default_str();
  app.add_option("--pretrain-weight-decay", c.pretrain.weight_decay)->capture_default_str();
  app.add_option("--pretrain-warmup", c.pretrain.warmup_steps)->capture_default_str();
  app.add_option("--mask-ratio", c.pretrain.mask_ratio)->capture_default_str();
  app.add_option("--corpus-fraction", c.corpus_fraction, "Nested corpus subset used for pretraining")
      ->capture_default_str();
  app.add_option("--resume", c.resume, "Continue pretraining from this encoder checkpoint");

  app.add_option("--epochs", c.finetune.epochs)->capture_default_str();
  app.add_option("--batch-size", c.finetune.batch_size)->capture_default_str();
  app.add_option("--encoder-lr", c.finetune.encoder_lr)->capture_default_str();
  app.add_option("--crf-lr", c.finetune.crf_lr, "Learning rate of the emission head and CRF")
      ->capture_default_str();
  app.add_option("--weight-decay", c.finetune.weight_decay)->capture_default_str();
  app.add_option("--warmup", c.finetune.warmup_steps)->capture_default_str();
  app.add_option("--patience", c.finetune.patience)->capture_default_str();
  app.add_flag("--no-early-stopping", f.no_early_stopping, "Keep the last epoch instead of the best");
  app.add_flag("--crf-boundary", c.finetune.crf_boundary, "Add start/end scores to the CRF");
  app.add_flag("--constrained", c.finetune.constrained_decode, "Decode only BIO-valid sequences");
  app.add_flag("--no-pretrain", c.no_pretrain, "Fine-tune a freshly initialised encoder");

  app.add_option("--split", c.eval_split, "Split to evaluate: train, val, test or all")->capture_default_str();
  app.add_option("--fractions", c.scale_fractions, "Corpus fractions for scale")->delimiter(',');
}

void finish_flags(RunConfig& c, const Flags& f) {
  try {
    c.strategy = cote::parse_strategy(f.strategy);
    c.tokenization = parse_tokenization_mode(f.tokenization);
  } catch (const std::invalid_argument& e) {
    throw CliError("config_error", e.what());
  }
  if (f.timeout_ms <= 0 || f.backoff_ms < 0) throw CliError("config_error", "timeouts must be positive");
  c.endpoint.timeout = std::chrono::milliseconds(f.timeout_ms);
  c.endpoint.backoff_base = std::chrono::milliseconds(f.backoff_ms);
  c.finetune.early_stopping = !f.no_early_stopping;
}

int fail(const std::string& code, const std::string& message) {
  std::string flat = message;
  for (auto& ch : flat)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << code << ": " << flat << std::endl;
  return code == "usage_error" ? 2 : 1;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Elucidation-augmented NER: corpus generation, MLM pretraining, CRF fine-tuning, evaluation"};
  app.name("elucid");
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);

  RunConfig cfg;
  Flags flags;
  add_options(app, cfg, flags);

  auto* gen = app.add_subcommand("generate-cote", "Generate an elucidation corpus for every gold entity");
  auto* pre = app.add_subcommand("pretrain", "Masked-language-model pretraining on an elucidation corpus");
  auto* fin = app.add_subcommand("finetune", "Fine-tune encoder + CRF and report strict/partial scores");
  auto* evl = app.add_subcommand("evaluate", "Score a model or a prediction file against a dataset split");
  auto* abl = app.add_subcommand("ablate", "Pretrain + fine-tune once per prompt-strategy corpus");
  auto* scl = app.add_subcommand("scale", "Pretrain + fine-tune on nested corpus fractions");
  auto* prd = app.add_subcommand("predict", "Tag raw text lines with a trained model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what());
  }

  Logger log(&std::cerr);
  try {
    finish_flags(cfg, flags);
    if (*gen) {
      auto out = cmd_generate_cote(cfg, log);
      const nlohmann::json summary = {{"corpus", out.corpus_path},
                                      {"instances", out.summary.total},
                                      {"records", out.summary.records},
                                      {"skipped", out.summary.skipped()},
                                      {"skipped_transient", out.summary.transient_skips},
                                      {"skipped_content", out.summary.content_skips},
                                      {"skipped_request", out.summary.request_skips},
                                      {"completion_tokens", out.summary.completion_tokens}};
      std::cout << summary.dump() << std::endl;
    } else if (*pre) {
      std::cout << cmd_pretrain(cfg, log) << std::endl;
    } else if (*fin) {
      auto out = cmd_finetune(cfg, log);
      std::cout << eval::emit_report({{cfg.no_pretrain ? "no-pretrain" : "pretrained", out.strict, out.partial}}).text;
    } else if (*evl) {
      std::cout << cmd_evaluate(cfg, log).text;
    } else if (*abl) {
      std::cout << cmd_ablate(cfg, log).text;
    } else if (*scl) {
      std::cout << cmd_scale(cfg, log).text;
    } else if (*prd) {
      std::cout << cmd_predict(cfg, log) << std::endl;
    }
  } catch (const CliError& e) {
    return fail(e.code(), e.what());
  } catch (const ParseError& e) {
    return fail("parse_error", e.what());
  } catch (const checkpoint::FormatError& e) {
    return fail("checkpoint_format", e.what());
  } catch (const mlm::NonFiniteLoss& e) {
    return fail("non_finite_loss", e.what());
  } catch (const train::NonFiniteLoss& e) {
    return fail("non_finite_loss", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("parse_error", e.what());
  } catch (const std::length_error& e) {
    return fail("input_too_long", e.what());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_input", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io_error", e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}

}  // namespace elucid::cli
