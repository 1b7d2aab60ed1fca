#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rwl/numerics/graph.hpp"

namespace rwl::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::int64_t step = 0;
};

// Bias-corrected adaptive-moment update in place. Moments are created lazily
// on the first call. Throws NumericError on a non-finite gradient before
// touching any parameter.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, OptimizerState& state);

// Applies adam_step to graph parameters using their accumulated gradients.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig config);

  void zero_grad() const;
  void step();
  const OptimizerState& state() const { return state_; }
  const std::vector<Var>& params() const { return params_; }

 private:
  std::vector<Var> params_;
  OptimizerState state_;
};

}  // namespace rwl::num
