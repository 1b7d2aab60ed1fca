#include "internal.hpp"

namespace rwl::agents {

using num::Tensor;
using num::Var;

DeterministicActorCritic::DeterministicActorCritic(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim)
    : Agent(cfg, obs_dim, action_dim), replay_(cfg.buffer_capacity, obs_dim, action_dim) {
  num::Rng init(num::mix_seed(cfg_.seed, 0x696e6974));
  const auto wa = detail::widths(obs_dim, cfg_.hidden, action_dim);
  const auto wc = detail::widths(obs_dim + action_dim, cfg_.hidden, 1);
  actor_ = num::Mlp(wa, init, "actor");
  critic1_ = num::Mlp(wc, init, "critic1");
  actor_target_ = detail::clone_as(actor_, wa, init, "actor_target");
  critic1_target_ = detail::clone_as(critic1_, wc, init, "critic1_target");
  actor_opt_ = std::make_unique<num::Adam>(actor_.parameters(), num::AdamConfig{cfg_.actor_lr});
  critic1_opt_ = std::make_unique<num::Adam>(critic1_.parameters(), num::AdamConfig{cfg_.critic_lr});
  if (twin()) {
    critic2_ = num::Mlp(wc, init, "critic2");
    critic2_target_ = detail::clone_as(critic2_, wc, init, "critic2_target");
    critic2_opt_ = std::make_unique<num::Adam>(critic2_.parameters(), num::AdamConfig{cfg_.critic_lr});
  }
}

Var DeterministicActorCritic::policy(const num::Mlp& net, const Var& obs) const { return num::tanh(net(obs)); }

std::vector<double> DeterministicActorCritic::act(std::span<const double> obs, bool explore) {
  check_obs(obs);
  num::NoGradGuard no_grad;
  const Var a = policy(actor_, num::constant(detail::row(obs)));
  std::vector<double> out(a.value().data().begin(), a.value().data().end());
  if (explore) {
    for (double& x : out) x += cfg_.exploration_sigma * rng_.normal();
  }
  return detail::clip_unit(out);
}

Tensor DeterministicActorCritic::smoothing_noise(std::size_t n) {
  return detail::normal_tensor({n, action_dim_}, rng_);
}

DeterministicActorCritic::Targets DeterministicActorCritic::targets(const Batch& b, const Tensor& noise) const {
  num::NoGradGuard no_grad;
  const Var next = num::constant(b.next_obs);
  Tensor a_next = policy(actor_target_, next).value();
  if (twin()) {
    if (noise.shape() != a_next.shape()) throw num::ShapeError("TD3 smoothing noise has the wrong shape");
    for (std::size_t i = 0; i < a_next.size(); ++i) {
      const double eps = std::clamp(cfg_.target_noise * noise[i], -cfg_.target_noise_clip, cfg_.target_noise_clip);
      a_next[i] = std::clamp(a_next[i] + eps, -1.0, 1.0);
    }
  }
  const Var sa = num::concat_cols(next, num::constant(a_next));
  Targets t;
  t.q1 = critic1_target_(sa).value();
  if (twin()) t.q2 = critic2_target_(sa).value();
  t.y = Tensor::like(b.reward);
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double q_next = twin() ? std::min(t.q1[i], t.q2[i]) : t.q1[i];
    t.y[i] = td_target(b.reward[i], b.done[i] != 0.0, q_next, cfg_.gamma);
  }
  return t;
}

Diagnostics DeterministicActorCritic::update(const Batch& b) {
  if (b.size() == 0) throw std::invalid_argument("update needs a non-empty batch");
  const Tensor noise = twin() ? smoothing_noise(b.size()) : Tensor{};
  const Targets t = targets(b, noise);
  const Var obs = num::constant(b.obs);
  const Var sa = num::concat_cols(obs, num::constant(b.action));

  Diagnostics d;
  critic1_opt_->zero_grad();
  const Var l1 = critic_loss(critic1_(sa), t.y);
  num::backward(l1);
  critic1_opt_->step();
  d.emplace_back("critic1_loss", l1.item());
  if (twin()) {
    critic2_opt_->zero_grad();
    const Var l2 = critic_loss(critic2_(sa), t.y);
    num::backward(l2);
    critic2_opt_->step();
    d.emplace_back("critic2_loss", l2.item());
  }
  ++updates_;

  const bool actor_step = !twin() || updates_ % cfg_.policy_delay == 0;
  if (actor_step) {
    critic1_opt_->zero_grad();
    actor_opt_->zero_grad();
    const Var la = num::neg(num::mean(critic1_(num::concat_cols(obs, policy(actor_, obs)))));
    num::backward(la);
    actor_opt_->step();
    last_actor_loss_ = la.item();
    polyak_update(actor_target_.parameters(), actor_.parameters(), cfg_.tau);
    polyak_update(critic1_target_.parameters(), critic1_.parameters(), cfg_.tau);
    if (twin()) polyak_update(critic2_target_.parameters(), critic2_.parameters(), cfg_.tau);
  }
  double q_mean = 0.0;
  for (double v : t.y.data()) q_mean += v;
  d.emplace_back("target_mean", q_mean / static_cast<double>(b.size()));
  // Between delayed actor steps the last actor loss is repeated.
  d.emplace_back("actor_loss", last_actor_loss_);
  detail::require_finite(d, to_string(cfg_.algorithm), detail::fingerprint(b));
  return d;
}

std::optional<Diagnostics> DeterministicActorCritic::observe(const Transition& t, bool) {
  replay_.push(t);
  if (replay_.size() < std::max(cfg_.warmup_steps, cfg_.batch_size)) return std::nullopt;
  return update(replay_.sample(cfg_.batch_size, rng_));
}

std::vector<Var> DeterministicActorCritic::parameters() const {
  auto p = detail::cat(actor_.parameters(), actor_target_.parameters());
  p = detail::cat(std::move(p), critic1_.parameters());
  p = detail::cat(std::move(p), critic1_target_.parameters());
  if (twin()) {
    p = detail::cat(std::move(p), critic2_.parameters());
    p = detail::cat(std::move(p), critic2_target_.parameters());
  }
  return p;
}

}  // namespace rwl::agents
