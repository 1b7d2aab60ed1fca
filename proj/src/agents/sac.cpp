#include <numbers>

#include "internal.hpp"

namespace rwl::agents {

using num::Tensor;
using num::Var;

namespace {

constexpr double kLogStdMin = -20.0, kLogStdMax = 2.0;
constexpr double kSquashEps = 1e-6;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

Sac::Sac(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim)
    : Agent(cfg, obs_dim, action_dim), replay_(cfg.buffer_capacity, obs_dim, action_dim) {
  num::Rng init(num::mix_seed(cfg_.seed, 0x696e6974));
  const auto wc = detail::widths(obs_dim + action_dim, cfg_.hidden, 1);
  // Mean and log standard deviation side by side.
  actor_ = num::Mlp(detail::widths(obs_dim, cfg_.hidden, 2 * action_dim), init, "actor");
  critic1_ = num::Mlp(wc, init, "critic1");
  critic2_ = num::Mlp(wc, init, "critic2");
  critic1_target_ = detail::clone_as(critic1_, wc, init, "critic1_target");
  critic2_target_ = detail::clone_as(critic2_, wc, init, "critic2_target");
  log_alpha_ = num::parameter(Tensor::vector({std::log(cfg_.init_alpha)}), "log_alpha");
  actor_opt_ = std::make_unique<num::Adam>(actor_.parameters(), num::AdamConfig{cfg_.actor_lr});
  critic1_opt_ = std::make_unique<num::Adam>(critic1_.parameters(), num::AdamConfig{cfg_.critic_lr});
  critic2_opt_ = std::make_unique<num::Adam>(critic2_.parameters(), num::AdamConfig{cfg_.critic_lr});
  alpha_opt_ = std::make_unique<num::Adam>(std::vector<Var>{log_alpha_}, num::AdamConfig{cfg_.alpha_lr});
}

double Sac::alpha() const { return std::exp(log_alpha_.value()[0]); }

double Sac::target_entropy() const { return cfg_.target_entropy.value_or(-static_cast<double>(action_dim_)); }

Sac::Sample Sac::sample(const Var& obs, const Tensor& noise) const {
  const Var out = actor_(obs);
  const Var mean = num::slice_cols(out, 0, action_dim_);
  const Var log_std = num::clamp(num::slice_cols(out, action_dim_, 2 * action_dim_), kLogStdMin, kLogStdMax);
  if (noise.shape() != mean.shape()) throw num::ShapeError("SAC noise has the wrong shape");
  const Var u = num::add(mean, num::mul(num::exp(log_std), num::constant(noise)));
  const Var a = num::tanh(u);
  // log N(u; mean, std) with u - mean = std * noise, then the tanh Jacobian.
  Tensor gauss = Tensor::like(noise);
  for (std::size_t i = 0; i < noise.size(); ++i) gauss[i] = -0.5 * noise[i] * noise[i] - kHalfLog2Pi;
  const Var logp_u = num::sum_cols(num::sub(num::constant(gauss), log_std));
  const Var log_jac = num::sum_cols(num::log(num::add_scalar(num::neg(num::square(a)), 1.0 + kSquashEps)));
  return {a, num::sub(logp_u, log_jac)};
}

std::vector<double> Sac::act(std::span<const double> obs, bool explore) {
  check_obs(obs);
  num::NoGradGuard no_grad;
  const Var x = num::constant(detail::row(obs));
  if (explore) {
    const Sample s = sample(x, detail::normal_tensor({1, action_dim_}, rng_));
    return detail::clip_unit(s.action.value().data());
  }
  const Var mean = num::tanh(num::slice_cols(actor_(x), 0, action_dim_));
  return detail::clip_unit(mean.value().data());
}

Diagnostics Sac::update(const Batch& b) {
  if (b.size() == 0) throw std::invalid_argument("update needs a non-empty batch");
  const std::size_t n = b.size();
  const double a = alpha();
  Tensor y = Tensor::like(b.reward);
  {
    num::NoGradGuard no_grad;
    const Var next = num::constant(b.next_obs);
    const Sample s = sample(next, detail::normal_tensor({n, action_dim_}, rng_));
    const Var sa = num::concat_cols(next, s.action);
    const Tensor q1 = critic1_target_(sa).value(), q2 = critic2_target_(sa).value();
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = td_target(b.reward[i], b.done[i] != 0.0, std::min(q1[i], q2[i]), cfg_.gamma, a * s.logp.value()[i]);
    }
  }
  const Var obs = num::constant(b.obs);
  const Var sa = num::concat_cols(obs, num::constant(b.action));
  Diagnostics d;
  critic1_opt_->zero_grad();
  const Var l1 = critic_loss(critic1_(sa), y);
  num::backward(l1);
  critic1_opt_->step();
  critic2_opt_->zero_grad();
  const Var l2 = critic_loss(critic2_(sa), y);
  num::backward(l2);
  critic2_opt_->step();
  d.emplace_back("critic1_loss", l1.item());
  d.emplace_back("critic2_loss", l2.item());

  actor_opt_->zero_grad();
  critic1_opt_->zero_grad();
  critic2_opt_->zero_grad();
  const Sample s = sample(obs, detail::normal_tensor({n, action_dim_}, rng_));
  const Var pa = num::concat_cols(obs, s.action);
  const Var q = num::minimum(critic1_(pa), critic2_(pa));
  const Var la = num::mean(num::sub(num::scale(s.logp, a), q));
  num::backward(la);
  actor_opt_->step();

  // d/d log_alpha of -log_alpha * (logp + target) averaged over the batch.
  double mean_logp = 0.0;
  for (double v : s.logp.value().data()) mean_logp += v;
  mean_logp /= static_cast<double>(n);
  alpha_opt_->zero_grad();
  const Var lalpha = num::neg(num::mul(log_alpha_, num::constant(Tensor::vector({mean_logp + target_entropy()}))));
  num::backward(num::sum(lalpha));
  alpha_opt_->step();

  polyak_update(critic1_target_.parameters(), critic1_.parameters(), cfg_.tau);
  polyak_update(critic2_target_.parameters(), critic2_.parameters(), cfg_.tau);
  d.emplace_back("actor_loss", la.item());
  d.emplace_back("alpha", alpha());
  d.emplace_back("entropy", -mean_logp);
  detail::require_finite(d, "sac", detail::fingerprint(b));
  return d;
}

std::optional<Diagnostics> Sac::observe(const Transition& t, bool) {
  replay_.push(t);
  if (replay_.size() < std::max(cfg_.warmup_steps, cfg_.batch_size)) return std::nullopt;
  return update(replay_.sample(cfg_.batch_size, rng_));
}

std::vector<Var> Sac::parameters() const {
  auto p = detail::cat(actor_.parameters(), critic1_.parameters());
  p = detail::cat(std::move(p), critic1_target_.parameters());
  p = detail::cat(std::move(p), critic2_.parameters());
  p = detail::cat(std::move(p), critic2_target_.parameters());
  p.push_back(log_alpha_);
  return p;
}

}  // namespace rwl::agents
