#pragma once

// Linear-chain CRF over tag sequences.
//
// With emissions E (n x T) and transitions A (T x T), a tag sequence y scores
//
//   s(y) = sum_i E[i, y_i] + sum_{i<n-1} A[y_i, y_{i+1}]  (+ start[y_0] + end[y_{n-1}])
//
// where the bracketed boundary terms are present only when boundary mode is on.
// Normalization, marginals and the NLL gradient come from log-space
// forward-backward; decoding is Viterbi.

#include <cstddef>
#include <vector>

#include "elucid/core.hpp"
#include "elucid/matrix.hpp"

namespace elucid::crf {

struct CrfParams {
  Matrix transitions;  // T x T, [from, to]
  bool boundary = false;
  Matrix start;  // 1 x T when boundary
  Matrix end;    // 1 x T when boundary

  CrfParams() = default;
  explicit CrfParams(std::size_t num_tags, bool with_boundary = false);

  std::size_t num_tags() const { return transitions.rows(); }
};

struct Marginals {
  Matrix unary;                // n x T
  std::vector<Matrix> pairwise;  // n-1 tables, each T x T
};

struct NllResult {
  double loss = 0.0;
  Matrix grad_emissions;  // n x T
  CrfParams grad;         // same shape as the params
};

struct Decoded {
  TagSequence tags;
  double score = 0.0;
};

double sequence_score(const Matrix& emissions, const CrfParams& params, const TagSequence& tags);
double log_partition(const Matrix& emissions, const CrfParams& params);
Marginals posterior_marginals(const Matrix& emissions, const CrfParams& params);
NllResult crf_nll(const Matrix& emissions, const CrfParams& params, const TagSequence& gold);

// Ties resolve to the lower tag index at every backtracking step.
Decoded viterbi(const Matrix& emissions, const CrfParams& params);

// Viterbi restricted to BIO-valid sequences: O -> I-t, B-s -> I-t, I-s -> I-t
// (s != t) and a leading I-t are excluded.
Decoded constrained_viterbi(const Matrix& emissions, const CrfParams& params, const LabelScheme& scheme);

bool bio_transition_allowed(const LabelScheme& scheme, std::size_t from, std::size_t to);
bool bio_start_allowed(const LabelScheme& scheme, std::size_t tag);

}  // namespace elucid::crf
