#include "elucid/optim.hpp"

#include <cmath>
#include <string>

namespace elucid::optim {

void adamw_step(const std::vector<encoder::NamedTensor>& params,
                const std::vector<encoder::ConstNamedTensor>& grads, OptimizerState& state, double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adamw_step: " + std::to_string(params.size()) + " parameters but " +
                                std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor->same_shape(*grads[i].tensor))
      throw std::invalid_argument("adamw_step: shape mismatch for '" + params[i].name + "'");
    for (double g : grads[i].tensor->data())
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in tensor '" + params[i].name + "'");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor->size(), 0.0);
      state.second_moment.emplace_back(p.tensor->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size())
    throw std::invalid_argument("adamw_step: optimizer state belongs to a different parameter group");

  ++state.step;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - lr * h.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor->data();
    const auto& g = grads[i].tensor->data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != p.size()) throw std::invalid_argument("adamw_step: moment shape mismatch for '" + params[i].name + "'");
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] = p[k] * decay - lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

double linear_schedule(std::size_t step, std::size_t total_steps, double base_lr, std::size_t warmup) {
  if (total_steps == 0) throw std::invalid_argument("linear_schedule: total_steps must be > 0");
  if (step > total_steps) throw std::out_of_range("linear_schedule: step beyond total_steps");
  if (warmup > 0 && step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (warmup >= total_steps) return base_lr;
  return base_lr * (1.0 - static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup));
}

}  // namespace elucid::optim
