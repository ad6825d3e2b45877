#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "elucid/encoder.hpp"

namespace elucid::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  AdamWConfig hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  OptimizerState() = default;
  explicit OptimizerState(AdamWConfig h) : hyper(h) {}
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One AdamW update over a parameter group. Weight decay is decoupled:
// p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps).
// Moment buffers are allocated on first use.
void adamw_step(const std::vector<encoder::NamedTensor>& params,
                const std::vector<encoder::ConstNamedTensor>& grads, OptimizerState& state, double lr);

// base_lr * (1 - step / total), with an optional linear warmup over the
// first `warmup` steps.
double linear_schedule(std::size_t step, std::size_t total_steps, double base_lr, std::size_t warmup = 0);

}  // namespace elucid::optim
