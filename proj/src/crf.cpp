#include "elucid/crf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace elucid::crf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

void check_emissions(const Matrix& e, const CrfParams& p) {
  if (e.rows() == 0) throw std::invalid_argument("crf: empty emission matrix");
  if (e.cols() != p.num_tags())
    throw std::invalid_argument("crf: emission width " + std::to_string(e.cols()) + " != tag count " +
                                std::to_string(p.num_tags()));
}

double start_score(const CrfParams& p, std::size_t t) { return p.boundary ? p.start[t] : 0.0; }
double end_score(const CrfParams& p, std::size_t t) { return p.boundary ? p.end[t] : 0.0; }

// alpha[i][t] = log-sum of scores of all prefixes ending in tag t at position i.
Matrix forward(const Matrix& e, const CrfParams& p) {
  const std::size_t n = e.rows(), T = e.cols();
  Matrix alpha(n, T);
  for (std::size_t t = 0; t < T; ++t) alpha(0, t) = e(0, t) + start_score(p, t);
  std::vector<double> buf(T);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < T; ++s) buf[s] = alpha(i - 1, s) + p.transitions(s, t);
      alpha(i, t) = log_sum_exp(buf) + e(i, t);
    }
  }
  return alpha;
}

// beta[i][t] = log-sum of scores of all suffixes after position i given tag t.
Matrix backward(const Matrix& e, const CrfParams& p) {
  const std::size_t n = e.rows(), T = e.cols();
  Matrix beta(n, T);
  for (std::size_t t = 0; t < T; ++t) beta(n - 1, t) = end_score(p, t);
  std::vector<double> buf(T);
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t s = 0; s < T; ++s) {
      for (std::size_t t = 0; t < T; ++t) buf[t] = p.transitions(s, t) + e(i + 1, t) + beta(i + 1, t);
      beta(i, s) = log_sum_exp(buf);
    }
  }
  return beta;
}

double log_z_from_alpha(const Matrix& alpha, const CrfParams& p) {
  const std::size_t n = alpha.rows(), T = alpha.cols();
  std::vector<double> last(T);
  for (std::size_t t = 0; t < T; ++t) last[t] = alpha(n - 1, t) + end_score(p, t);
  return log_sum_exp(last);
}

Decoded decode(const Matrix& e, const CrfParams& p, const LabelScheme* scheme) {
  check_emissions(e, p);
  const std::size_t n = e.rows(), T = e.cols();
  auto trans = [&](std::size_t s, std::size_t t) {
    if (scheme && !bio_transition_allowed(*scheme, s, t)) return kNegInf;
    return p.transitions(s, t);
  };
  Matrix delta(n, T);
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(T, 0));
  for (std::size_t t = 0; t < T; ++t) {
    delta(0, t) = e(0, t) + start_score(p, t);
    if (scheme && !bio_start_allowed(*scheme, t)) delta(0, t) = kNegInf;
  }
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      double best = delta(i - 1, 0) + trans(0, t);
      std::size_t arg = 0;
      for (std::size_t s = 1; s < T; ++s) {
        double v = delta(i - 1, s) + trans(s, t);
        if (v > best) {
          best = v;
          arg = s;
        }
      }
      delta(i, t) = best + e(i, t);
      back[i][t] = arg;
    }
  }
  double best = delta(n - 1, 0) + end_score(p, 0);
  std::size_t arg = 0;
  for (std::size_t t = 1; t < T; ++t) {
    double v = delta(n - 1, t) + end_score(p, t);
    if (v > best) {
      best = v;
      arg = t;
    }
  }
  Decoded out;
  out.tags.assign(n, 0);
  out.tags[n - 1] = arg;
  for (std::size_t i = n - 1; i > 0; --i) out.tags[i - 1] = back[i][out.tags[i]];
  out.score = sequence_score(e, p, out.tags);
  return out;
}

}  // namespace

CrfParams::CrfParams(std::size_t num_tags, bool with_boundary)
    : transitions(num_tags, num_tags, 0.0), boundary(with_boundary) {
  if (boundary) {
    start = Matrix(1, num_tags, 0.0);
    end = Matrix(1, num_tags, 0.0);
  }
}

double sequence_score(const Matrix& emissions, const CrfParams& params, const TagSequence& tags) {
  check_emissions(emissions, params);
  if (tags.size() != emissions.rows())
    throw std::invalid_argument("sequence_score: tag sequence length " + std::to_string(tags.size()) +
                                " != emission rows " + std::to_string(emissions.rows()));
  for (auto t : tags)
    if (t >= params.num_tags()) throw std::out_of_range("sequence_score: tag index out of range");
  double s = 0.0;
  for (std::size_t i = 0; i < tags.size(); ++i) s += emissions(i, tags[i]);
  for (std::size_t i = 0; i + 1 < tags.size(); ++i) s += params.transitions(tags[i], tags[i + 1]);
  if (params.boundary) {
    s += params.start[tags.front()];
    s += params.end[tags.back()];
  }
  return s;
}

double log_partition(const Matrix& emissions, const CrfParams& params) {
  check_emissions(emissions, params);
  return log_z_from_alpha(forward(emissions, params), params);
}

Marginals posterior_marginals(const Matrix& emissions, const CrfParams& params) {
  check_emissions(emissions, params);
  const std::size_t n = emissions.rows(), T = emissions.cols();
  Matrix alpha = forward(emissions, params);
  Matrix beta = backward(emissions, params);
  const double log_z = log_z_from_alpha(alpha, params);

  Marginals m;
  m.unary = Matrix(n, T);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < T; ++t) m.unary(i, t) = std::exp(alpha(i, t) + beta(i, t) - log_z);

  m.pairwise.reserve(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Matrix pw(T, T);
    for (std::size_t s = 0; s < T; ++s)
      for (std::size_t t = 0; t < T; ++t)
        pw(s, t) = std::exp(alpha(i, s) + params.transitions(s, t) + emissions(i + 1, t) + beta(i + 1, t) - log_z);
    m.pairwise.push_back(std::move(pw));
  }
  return m;
}

NllResult crf_nll(const Matrix& emissions, const CrfParams& params, const TagSequence& gold) {
  const double gold_score = sequence_score(emissions, params, gold);
  const std::size_t n = emissions.rows(), T = emissions.cols();
  Marginals m = posterior_marginals(emissions, params);

  NllResult r;
  r.loss = log_partition(emissions, params) - gold_score;
  r.grad_emissions = m.unary;
  for (std::size_t i = 0; i < n; ++i) r.grad_emissions(i, gold[i]) -= 1.0;

  r.grad = CrfParams(T, params.boundary);
  for (const auto& pw : m.pairwise)
    for (std::size_t k = 0; k < pw.size(); ++k) r.grad.transitions[k] += pw[k];
  for (std::size_t i = 0; i + 1 < n; ++i) r.grad.transitions(gold[i], gold[i + 1]) -= 1.0;
  if (params.boundary) {
    for (std::size_t t = 0; t < T; ++t) {
      r.grad.start[t] = m.unary(0, t);
      r.grad.end[t] = m.unary(n - 1, t);
    }
    r.grad.start[gold.front()] -= 1.0;
    r.grad.end[gold.back()] -= 1.0;
  }
  return r;
}

Decoded viterbi(const Matrix& emissions, const CrfParams& params) { return decode(emissions, params, nullptr); }

Decoded constrained_viterbi(const Matrix& emissions, const CrfParams& params, const LabelScheme& scheme) {
  if (scheme.num_tags() != params.num_tags())
    throw std::invalid_argument("constrained_viterbi: scheme has " + std::to_string(scheme.num_tags()) +
                                " tags, CRF has " + std::to_string(params.num_tags()));
  return decode(emissions, params, &scheme);
}

bool bio_transition_allowed(const LabelScheme& scheme, std::size_t from, std::size_t to) {
  if (scheme.kind(to) != TagKind::Inside) return true;
  if (scheme.kind(from) == TagKind::Outside) return false;
  return scheme.tag_type(from) == scheme.tag_type(to);
}

bool bio_start_allowed(const LabelScheme& scheme, std::size_t tag) { return scheme.kind(tag) != TagKind::Inside; }

}  // namespace elucid::crf
