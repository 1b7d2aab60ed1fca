#include "rwl/numerics/optim.hpp"

#include <cmath>
#include <string>

namespace rwl::num {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, OptimizerState& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape()) {
      throw ShapeError("adam_step: gradient " + shape_str(grads[i]->shape()) + " for parameter " +
                       shape_str(params[i]->shape()) + " (index " + std::to_string(i) + ")");
    }
    require_finite(*grads[i], "adam_step gradient " + std::to_string(i));
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.push_back(Tensor::like(*p));
      state.second_moment.push_back(Tensor::like(*p));
    }
  } else if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks a different parameter set");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      p[k] -= c.lr * mh / (std::sqrt(vh) + c.eps);
    }
  }
}

Adam::Adam(std::vector<Var> params, AdamConfig config) : params_(std::move(params)) { state_.config = config; }

void Adam::zero_grad() const { num::zero_grad(params_); }

void Adam::step() {
  std::vector<Tensor*> ps;
  std::vector<const Tensor*> gs;
  ps.reserve(params_.size());
  gs.reserve(params_.size());
  for (const auto& p : params_) {
    ps.push_back(&p.node()->value);
    gs.push_back(&p.node()->grad_buffer());
  }
  adam_step(ps, gs, state_);
}

}  // namespace rwl::num
