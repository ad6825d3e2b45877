#pragma once

// Stage commands behind the `elucid` executable. Each command reads a
// RunConfig, writes its artifacts under declared paths and returns what it
// produced so the harness commands can compose them.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "elucid/cote.hpp"
#include "elucid/encoder.hpp"
#include "elucid/eval.hpp"
#include "elucid/log.hpp"
#include "elucid/mlm.hpp"
#include "elucid/train.hpp"

namespace elucid::cli {

// Reported as `code: message` with a nonzero exit status.
class CliError : public std::runtime_error {
 public:
  CliError(std::string code, const std::string& message) : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct RunConfig {
  // Inputs. Empty paths fall back to the conventional names under out_dir.
  std::string dataset;
  std::string corpus;
  std::string encoder;
  std::string model;
  std::string input;
  std::string predictions;
  std::string corpus_explain;
  std::string corpus_think;
  std::string corpus_role;

  // Outputs.
  std::string out_dir = "runs";
  std::string output;

  std::uint64_t seed = 13;
  bool mock = false;
  TokenizationMode tokenization = TokenizationMode::Latin;

  cote::Strategy strategy = cote::Strategy::Explain;
  std::string prompt_template;
  std::string cote_split = "all";  // all | train
  cote::ChatEndpointConfig endpoint;

  encoder::EncoderConfig encoder_config;
  std::size_t min_count = 1;

  mlm::PretrainConfig pretrain;
  double corpus_fraction = 1.0;
  std::string resume;

  train::FinetuneConfig finetune;
  bool no_pretrain = false;

  std::string eval_split = "test";  // train | val | test | all
  std::vector<double> scale_fractions{0.25, 0.5, 0.75, 1.0};

  void validate() const;

  std::string corpus_path() const;
  std::string encoder_path() const;
  std::string model_path() const;
};

struct GenerateOutput {
  std::string corpus_path;
  cote::CorpusSummary summary;
};

struct FinetuneOutput {
  std::string model_path;
  std::string report_path;
  eval::EvalReport strict;
  eval::EvalReport partial;
  std::size_t best_epoch = 0;
};

struct TableOutput {
  std::string text;
  nlohmann::json json;
};

GenerateOutput cmd_generate_cote(const RunConfig& cfg, const Logger& log);
GenerateOutput cmd_generate_cote(const RunConfig& cfg, const Logger& log, cote::ChatBackend& backend);
std::string cmd_pretrain(const RunConfig& cfg, const Logger& log);
FinetuneOutput cmd_finetune(const RunConfig& cfg, const Logger& log);
TableOutput cmd_evaluate(const RunConfig& cfg, const Logger& log);
TableOutput cmd_ablate(const RunConfig& cfg, const Logger& log);
TableOutput cmd_scale(const RunConfig& cfg, const Logger& log);
std::string cmd_predict(const RunConfig& cfg, const Logger& log);

// Full command line entry point; returns the process exit status.
int run(int argc, char** argv);

}  // namespace elucid::cli
