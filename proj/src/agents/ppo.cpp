#include <numbers>
#include <numeric>

#include "internal.hpp"

namespace rwl::agents {

using num::Tensor;
using num::Var;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void clip_grad_norm(const std::vector<Var>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.node()->grad_buffer().data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double s = max_norm / norm;
  for (const auto& p : params) {
    for (double& g : p.node()->grad_buffer().data()) g *= s;
  }
}

}  // namespace

Ppo::Ppo(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim) : Agent(cfg, obs_dim, action_dim) {
  num::Rng init(num::mix_seed(cfg_.seed, 0x696e6974));
  policy_ = num::Mlp(detail::widths(obs_dim, cfg_.hidden, action_dim), init, "policy");
  value_ = num::Mlp(detail::widths(obs_dim, cfg_.hidden, 1), init, "value");
  log_std_ = num::parameter(Tensor({action_dim, 1}), "log_std");
  opt_ = std::make_unique<num::Adam>(parameters(), num::AdamConfig{cfg_.ppo_lr});
}

Var Ppo::log_std_rows(std::size_t n) const {
  // ones[n, 1] x log_std[a, 1]^T broadcasts the row to every sample.
  return num::affine(num::constant(Tensor({n, 1}, 1.0)), log_std_, num::constant(Tensor({action_dim_})));
}

Var Ppo::log_prob(const Var& obs, const Tensor& raw_action) const {
  const std::size_t n = raw_action.dim(0);
  const Var mean = policy_(obs);
  const Var ls = log_std_rows(n);
  const Var z = num::mul(num::sub(num::constant(raw_action), mean), num::exp(num::neg(ls)));
  const Var per_dim = num::sub(num::scale(num::square(z), -0.5), ls);
  return num::add_scalar(num::sum_cols(per_dim), -0.5 * kLog2Pi * static_cast<double>(action_dim_));
}

double Ppo::value(std::span<const double> obs) const {
  check_obs(obs);
  num::NoGradGuard no_grad;
  return value_(num::constant(detail::row(obs))).item();
}

std::vector<double> Ppo::act(std::span<const double> obs, bool explore) {
  check_obs(obs);
  num::NoGradGuard no_grad;
  const Var x = num::constant(detail::row(obs));
  const Tensor mean = policy_(x).value();
  if (!explore) return detail::clip_unit(mean.data());
  Pending p;
  p.raw_action.resize(action_dim_);
  double logp = -0.5 * kLog2Pi * static_cast<double>(action_dim_);
  for (std::size_t i = 0; i < action_dim_; ++i) {
    const double ls = log_std_.value()[i];
    const double eps = rng_.normal();
    p.raw_action[i] = mean[i] + std::exp(ls) * eps;
    logp += -0.5 * eps * eps - ls;
  }
  p.logp = logp;
  p.value = value_(x).item();
  pending_ = p;
  return detail::clip_unit(p.raw_action);
}

std::optional<Diagnostics> Ppo::observe(const Transition& t, bool episode_end) {
  if (!pending_) throw std::logic_error("PPO observe() needs a preceding exploring act()");
  check_obs(t.obs);
  obs_.push_back(t.obs);
  raw_.push_back(pending_->raw_action);
  logp_.push_back(pending_->logp);
  values_.push_back(pending_->value);
  pending_.reset();
  double r = t.reward;
  bool cut = t.done;
  // A truncated episode folds the bootstrap value into its last reward.
  if (episode_end && !t.done) {
    r += cfg_.gamma * value(t.next_obs);
    cut = true;
  }
  rewards_.push_back(r);
  dones_.push_back(cut ? 1.0 : 0.0);
  if (obs_.size() < cfg_.rollout_steps) return std::nullopt;

  const double last = cut ? 0.0 : value(t.next_obs);
  const GaeResult g = gae(rewards_, values_, dones_, cfg_.gamma, cfg_.gae_lambda, last);
  const std::size_t n = obs_.size();
  Rollout ro{Tensor({n, obs_dim_}), Tensor({n, action_dim_}), logp_, g.advantages, g.returns};
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(obs_[i].begin(), obs_[i].end(), ro.obs.raw() + i * obs_dim_);
    std::copy(raw_[i].begin(), raw_[i].end(), ro.raw_action.raw() + i * action_dim_);
  }
  obs_.clear();
  raw_.clear();
  logp_.clear();
  values_.clear();
  rewards_.clear();
  dones_.clear();
  return update(ro);
}

Diagnostics Ppo::update(const Rollout& r) {
  const std::size_t n = r.logp.size();
  if (n == 0) throw std::invalid_argument("PPO update needs a non-empty rollout");
  if (r.advantages.size() != n || r.returns.size() != n || r.obs.dim(0) != n || r.raw_action.dim(0) != n) {
    throw num::ShapeError("PPO rollout fields differ in length");
  }
  const std::vector<double> adv = normalize_advantages(r.advantages);
  const auto params = parameters();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  double pl_sum = 0.0, vl_sum = 0.0, kl_sum = 0.0, clip_sum = 0.0;
  std::size_t batches = 0, samples = 0;
  for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
    rng_.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < n; start += cfg_.minibatch_size) {
      const std::size_t m = std::min(cfg_.minibatch_size, n - start);
      Tensor obs({m, obs_dim_}), raw({m, action_dim_}), old({m, 1}), a({m, 1}), ret({m, 1});
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = order[start + k];
        std::copy_n(r.obs.raw() + i * obs_dim_, obs_dim_, obs.raw() + k * obs_dim_);
        std::copy_n(r.raw_action.raw() + i * action_dim_, action_dim_, raw.raw() + k * action_dim_);
        old[k] = r.logp[i];
        a[k] = adv[i];
        ret[k] = r.returns[i];
      }
      const Var x = num::constant(obs);
      const Var logp = log_prob(x, raw);
      const Var pl = ppo_policy_loss(logp, old, a, cfg_.clip_epsilon);
      const Var vl = critic_loss(value_(x), ret);
      // Gaussian entropy: sum(log_std) + a/2 log(2 pi e).
      const Var entropy =
          num::add_scalar(num::sum(log_std_), 0.5 * (kLog2Pi + 1.0) * static_cast<double>(action_dim_));
      const Var loss = num::sub(num::add(pl, num::scale(vl, cfg_.value_coef)), num::scale(entropy, cfg_.entropy_coef));
      opt_->zero_grad();
      num::backward(loss);
      clip_grad_norm(params, cfg_.max_grad_norm);
      opt_->step();
      pl_sum += pl.item();
      vl_sum += vl.item();
      for (std::size_t k = 0; k < m; ++k) {
        const double ratio = std::exp(logp.value()[k] - old[k]);
        kl_sum += old[k] - logp.value()[k];
        clip_sum += std::abs(ratio - 1.0) > cfg_.clip_epsilon ? 1.0 : 0.0;
      }
      ++batches;
      samples += m;
    }
  }
  double entropy = 0.5 * (kLog2Pi + 1.0) * static_cast<double>(action_dim_);
  for (double v : log_std_.value().data()) entropy += v;
  Diagnostics d = {{"policy_loss", pl_sum / static_cast<double>(batches)},
                   {"value_loss", vl_sum / static_cast<double>(batches)},
                   {"entropy", entropy},
                   {"approx_kl", kl_sum / static_cast<double>(samples)},
                   {"clip_fraction", clip_sum / static_cast<double>(samples)}};
  detail::require_finite(d, "ppo", 0);
  return d;
}

std::vector<Var> Ppo::parameters() const {
  auto p = detail::cat(policy_.parameters(), value_.parameters());
  p.push_back(log_std_);
  return p;
}

}  // namespace rwl::agents
