#include "elucid/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "elucid/core.hpp"
#include "elucid/rng.hpp"

namespace elucid::encoder {

namespace {

constexpr double kInitRange = 0.05;

void fill_uniform(Matrix& m, Rng& rng) {
  for (auto& v : m.data()) v = rng.uniform(-kInitRange, kInitRange);
}

// out (n x k) = a (n x m) * b (m x k) + bias (1 x k)
Matrix affine(const Matrix& a, const Matrix& b, const Matrix& bias) {
  if (a.cols() != b.rows() || bias.cols() != b.cols())
    throw std::invalid_argument("affine: shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < b.cols(); ++k) o[k] = bias[k];
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double x = a(i, j);
      if (x == 0.0) continue;
      auto br = b.row(j);
      for (std::size_t k = 0; k < b.cols(); ++k) o[k] += x * br[k];
    }
  }
  return out;
}

// Backward of out = x*w + b for one head; adds to dw, db, dx.
void affine_backward(const Matrix& x, const Matrix& w, const Matrix& dout, Matrix& dw, Matrix& db, Matrix& dx) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto g = dout.row(i);
    bool any = false;
    for (double v : g)
      if (v != 0.0) {
        any = true;
        break;
      }
    if (!any) continue;
    for (std::size_t k = 0; k < g.size(); ++k) db[k] += g[k];
    auto xr = x.row(i);
    auto dxr = dx.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j) {
      auto wr = w.row(j);
      auto dwr = dw.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) {
        dwr[k] += xr[j] * g[k];
        acc += wr[k] * g[k];
      }
      dxr[j] += acc;
    }
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < static_cast<std::size_t>(Vocab::kNumReserved))
    throw std::invalid_argument("encoder: vocab_size must cover the reserved ids");
  if (dim < 1 || hidden < 1) throw std::invalid_argument("encoder: dim and hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("encoder: dropout must be in [0, 1)");
  if (max_len < 1) throw std::invalid_argument("encoder: max_len must be >= 1");
}

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
  EncoderParams p;
  p.config = cfg;
  p.token_emb = Matrix(cfg.vocab_size, cfg.dim);
  p.pos_emb = Matrix(cfg.max_len, cfg.dim);
  p.mixer_w = Matrix(cfg.window() * cfg.dim, cfg.hidden);
  p.mixer_b = Matrix(1, cfg.hidden);
  p.mlm_w = Matrix(cfg.hidden, cfg.vocab_size);
  p.mlm_b = Matrix(1, cfg.vocab_size);
  p.emit_w = Matrix(cfg.hidden, cfg.num_tags);
  p.emit_b = Matrix(1, cfg.num_tags);
  return p;
}

std::vector<NamedTensor> EncoderParams::tensors() {
  return {{"token_emb", &token_emb}, {"pos_emb", &pos_emb}, {"mixer_w", &mixer_w}, {"mixer_b", &mixer_b},
          {"mlm_w", &mlm_w},         {"mlm_b", &mlm_b},     {"emit_w", &emit_w},   {"emit_b", &emit_b}};
}

std::vector<ConstNamedTensor> EncoderParams::tensors() const {
  std::vector<ConstNamedTensor> out;
  for (auto& t : const_cast<EncoderParams*>(this)->tensors()) out.push_back({t.name, t.tensor});
  return out;
}

void EncoderParams::check_shapes() const {
  const auto& c = config;
  require_shape(token_emb, c.vocab_size, c.dim, "token_emb");
  require_shape(pos_emb, c.max_len, c.dim, "pos_emb");
  require_shape(mixer_w, c.window() * c.dim, c.hidden, "mixer_w");
  require_shape(mixer_b, 1, c.hidden, "mixer_b");
  require_shape(mlm_w, c.hidden, c.vocab_size, "mlm_w");
  require_shape(mlm_b, 1, c.vocab_size, "mlm_b");
  require_shape(emit_w, c.hidden, c.num_tags, "emit_w");
  require_shape(emit_b, 1, c.num_tags, "emit_b");
}

bool EncoderParams::all_finite() const {
  for (const auto& t : tensors())
    for (double v : t.tensor->data())
      if (!std::isfinite(v)) return false;
  return true;
}

EncoderParams init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  EncoderParams p = EncoderParams::zeros(cfg);
  Rng rng(seed);
  fill_uniform(p.token_emb, rng);
  for (auto& v : p.token_emb.row(Vocab::kPad)) v = 0.0;
  fill_uniform(p.pos_emb, rng);
  fill_uniform(p.mixer_w, rng);
  fill_uniform(p.mlm_w, rng);
  fill_uniform(p.emit_w, rng);
  return p;
}

EncoderState encode(const EncoderParams& p, const std::vector<std::int32_t>& ids, bool train_mode,
                    std::uint64_t seed) {
  p.check_shapes();
  const auto& c = p.config;
  const std::size_t n = ids.size();
  if (n == 0) throw std::invalid_argument("encode: empty sequence");
  if (n > c.max_len)
    throw std::length_error("encode: sequence length " + std::to_string(n) + " exceeds max_len " +
                            std::to_string(c.max_len));
  for (auto id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size)
      throw std::out_of_range("encode: token id " + std::to_string(id) + " outside vocabulary");

  EncoderState st;
  st.ids = ids;
  st.inputs = Matrix(n, c.window() * c.dim);
  const auto r = static_cast<std::ptrdiff_t>(c.radius);
  for (std::size_t i = 0; i < n; ++i) {
    auto in = st.inputs.row(i);
    for (std::ptrdiff_t o = -r; o <= r; ++o) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + o;
      const std::size_t slot = static_cast<std::size_t>(o + r) * c.dim;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) {
        auto pad = p.token_emb.row(Vocab::kPad);
        for (std::size_t k = 0; k < c.dim; ++k) in[slot + k] = pad[k];
      } else {
        auto e = p.token_emb.row(static_cast<std::size_t>(ids[static_cast<std::size_t>(j)]));
        auto pe = p.pos_emb.row(static_cast<std::size_t>(j));
        for (std::size_t k = 0; k < c.dim; ++k) in[slot + k] = e[k] + pe[k];
      }
    }
  }

  st.activation = affine(st.inputs, p.mixer_w, p.mixer_b);
  for (auto& v : st.activation.data()) v = std::tanh(v);

  st.hidden = st.activation;
  if (train_mode && c.dropout > 0.0) {
    Rng rng(seed);
    const double scale = 1.0 / (1.0 - c.dropout);
    st.keep_scale = Matrix(n, c.hidden);
    for (std::size_t k = 0; k < st.hidden.size(); ++k) {
      st.keep_scale[k] = rng.uniform() < c.dropout ? 0.0 : scale;
      st.hidden[k] *= st.keep_scale[k];
    }
  }
  return st;
}

Matrix mlm_logits(const EncoderParams& p, const Matrix& hidden) {
  require_shape(hidden, hidden.rows(), p.config.hidden, "mlm_logits hidden");
  return affine(hidden, p.mlm_w, p.mlm_b);
}

Matrix emissions(const EncoderParams& p, const Matrix& hidden) {
  require_shape(hidden, hidden.rows(), p.config.hidden, "emissions hidden");
  return affine(hidden, p.emit_w, p.emit_b);
}

EncoderParams backward(const EncoderParams& p, const EncoderState& state, const OutputGrads& grads) {
  EncoderParams g = EncoderParams::zeros(p.config);
  accumulate_backward(p, state, grads, g);
  return g;
}

void accumulate_backward(const EncoderParams& p, const EncoderState& state, const OutputGrads& grads,
                         EncoderParams& acc) {
  p.check_shapes();
  acc.check_shapes();
  if (!(acc.config == p.config)) throw std::invalid_argument("backward: gradient buffer config mismatch");
  const auto& c = p.config;
  const std::size_t n = state.length();
  require_shape(state.hidden, n, c.hidden, "backward hidden");
  require_shape(state.inputs, n, c.window() * c.dim, "backward inputs");

  Matrix d_hidden(n, c.hidden);
  if (grads.logits) {
    require_shape(*grads.logits, n, c.vocab_size, "backward logits gradient");
    affine_backward(state.hidden, p.mlm_w, *grads.logits, acc.mlm_w, acc.mlm_b, d_hidden);
  }
  if (grads.emissions) {
    require_shape(*grads.emissions, n, c.num_tags, "backward emission gradient");
    affine_backward(state.hidden, p.emit_w, *grads.emissions, acc.emit_w, acc.emit_b, d_hidden);
  }

  // Through dropout and tanh.
  Matrix d_pre = d_hidden;
  for (std::size_t k = 0; k < d_pre.size(); ++k) {
    if (!state.keep_scale.empty()) d_pre[k] *= state.keep_scale[k];
    const double a = state.activation[k];
    d_pre[k] *= 1.0 - a * a;
  }

  Matrix d_inputs(n, c.window() * c.dim);
  affine_backward(state.inputs, p.mixer_w, d_pre, acc.mixer_w, acc.mixer_b, d_inputs);

  const auto r = static_cast<std::ptrdiff_t>(c.radius);
  for (std::size_t i = 0; i < n; ++i) {
    auto din = d_inputs.row(i);
    for (std::ptrdiff_t o = -r; o <= r; ++o) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + o;
      const std::size_t slot = static_cast<std::size_t>(o + r) * c.dim;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(n)) {
        auto pad = acc.token_emb.row(Vocab::kPad);
        for (std::size_t k = 0; k < c.dim; ++k) pad[k] += din[slot + k];
      } else {
        auto e = acc.token_emb.row(static_cast<std::size_t>(state.ids[static_cast<std::size_t>(j)]));
        auto pe = acc.pos_emb.row(static_cast<std::size_t>(j));
        for (std::size_t k = 0; k < c.dim; ++k) {
          e[k] += din[slot + k];
          pe[k] += din[slot + k];
        }
      }
    }
  }
}

void reset_emission_head(EncoderParams& p, std::size_t num_tags, std::uint64_t seed) {
  p.config.num_tags = num_tags;
  p.emit_w = Matrix(p.config.hidden, num_tags);
  p.emit_b = Matrix(1, num_tags);
  Rng rng(seed);
  fill_uniform(p.emit_w, rng);
}

void round_to_storage(EncoderParams& p) {
  for (auto& t : p.tensors())
    for (auto& v : t.tensor->data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace elucid::encoder
