#pragma once

// Compact trainable token encoder.
//
// Position i reads a window of 2r+1 neighbours. Each in-range neighbour j
// contributes token_emb[id_j] + pos_emb[j]; out-of-range neighbours contribute
// the PAD row of token_emb. The concatenated window goes through one affine
// mixer and tanh, then inverted dropout in training mode. Two affine heads sit
// on top: MLM logits over the vocabulary and CRF emission scores over tags.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "elucid/matrix.hpp"

namespace elucid::encoder {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t dim = 64;
  std::size_t radius = 2;
  std::size_t hidden = 128;
  std::size_t num_tags = 0;
  double dropout = 0.1;
  std::size_t max_len = 256;

  std::size_t window() const { return 2 * radius + 1; }
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Matrix* tensor;
};

struct ConstNamedTensor {
  std::string name;
  const Matrix* tensor;
};

struct EncoderParams {
  EncoderConfig config;
  Matrix token_emb;  // vocab x dim
  Matrix pos_emb;    // max_len x dim
  Matrix mixer_w;    // window*dim x hidden
  Matrix mixer_b;    // 1 x hidden
  Matrix mlm_w;      // hidden x vocab
  Matrix mlm_b;      // 1 x vocab
  Matrix emit_w;     // hidden x num_tags
  Matrix emit_b;     // 1 x num_tags

  // Zero-filled tensors with the shapes implied by `cfg`.
  static EncoderParams zeros(const EncoderConfig& cfg);

  // Declaration order; this is also the checkpoint order.
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;

  void check_shapes() const;
  bool all_finite() const;
  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Forward activations kept for the backward pass.
struct EncoderState {
  std::vector<std::int32_t> ids;
  Matrix inputs;      // n x window*dim
  Matrix activation;  // n x hidden, tanh output
  Matrix keep_scale;  // n x hidden dropout multipliers; empty when not training
  Matrix hidden;      // n x hidden, after dropout

  std::size_t length() const { return ids.size(); }
};

EncoderParams init_params(const EncoderConfig& cfg, std::uint64_t seed);

EncoderState encode(const EncoderParams& p, const std::vector<std::int32_t>& ids, bool train_mode,
                    std::uint64_t seed);

Matrix mlm_logits(const EncoderParams& p, const Matrix& hidden);
Matrix emissions(const EncoderParams& p, const Matrix& hidden);

// Upstream gradients for either head; a null pointer means that head is unused.
struct OutputGrads {
  const Matrix* logits = nullptr;     // n x vocab
  const Matrix* emissions = nullptr;  // n x num_tags
};

EncoderParams backward(const EncoderParams& p, const EncoderState& state, const OutputGrads& grads);

// Same as backward() but adds into `acc`, which must have the shapes of `p`.
void accumulate_backward(const EncoderParams& p, const EncoderState& state, const OutputGrads& grads,
                         EncoderParams& acc);

// Replaces the emission head with a freshly initialised one for `num_tags`.
void reset_emission_head(EncoderParams& p, std::size_t num_tags, std::uint64_t seed);

// Rounds every entry to float32, the checkpoint storage precision.
void round_to_storage(EncoderParams& p);

}  // namespace elucid::encoder
