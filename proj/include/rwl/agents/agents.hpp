#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rwl/agents/replay.hpp"
#include "rwl/numerics/layers.hpp"
#include "rwl/numerics/optim.hpp"

namespace rwl::agents {

enum class Algorithm { DDPG, TD3, SAC, PPO };
std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);
bool is_off_policy(Algorithm a);

struct AgentConfig {
  Algorithm algorithm = Algorithm::SAC;
  double gamma = 0.99;
  double tau = 0.005;
  std::vector<std::size_t> hidden = {64, 64};
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  std::uint64_t seed = 0;

  // Off-policy.
  std::size_t batch_size = 128;
  std::size_t buffer_capacity = 1'000'000;
  std::size_t warmup_steps = 1000;  // uniform-random actions, no updates
  double exploration_sigma = 0.1;   // Gaussian action noise (DDPG, TD3)

  // TD3.
  int policy_delay = 2;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;

  // SAC. The entropy target defaults to -|A|.
  double init_alpha = 1.0;
  double alpha_lr = 1e-3;
  std::optional<double> target_entropy;

  // PPO.
  std::size_t rollout_steps = 2048;
  int ppo_epochs = 10;
  std::size_t minibatch_size = 64;
  double clip_epsilon = 0.2;
  double gae_lambda = 0.95;
  double ppo_lr = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// Ordered (name, value) pairs, one CSV column each.
using Diagnostics = std::vector<std::pair<std::string, double>>;

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// target <- (1 - tau) target + tau online, elementwise.
void polyak_update(std::span<const num::Var> target, std::span<const num::Var> online, double tau);
// r + (1 - done) * gamma * (q_next - entropy_term).
double td_target(double r, bool done, double q_next, double gamma, double entropy_term = 0.0);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};
// delta_t = r_t + gamma (1 - done_t) V_{t+1} - V_t with V_T = last_value;
// A_t = sum_k (gamma lambda)^k delta_{t+k}, cut at done.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
              double gamma, double lambda, double last_value = 0.0);
// Mean 0, population std 1; all zeros when the spread vanishes.
std::vector<double> normalize_advantages(std::span<const double> adv);
// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double advantage, double eps);
// -mean(min(ratio A, clip(ratio) A)) with ratio = exp(logp_new - logp_old).
num::Var ppo_policy_loss(const num::Var& logp_new, const num::Tensor& logp_old, const num::Tensor& advantages,
                         double eps);
num::Var critic_loss(const num::Var& q, const num::Tensor& target);

class Agent {
 public:
  Agent(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim);
  virtual ~Agent() = default;

  const AgentConfig& config() const { return cfg_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t action_dim() const { return action_dim_; }

  // Components in [-1, 1]. explore = false gives the deterministic (mean) action.
  virtual std::vector<double> act(std::span<const double> obs, bool explore) = 0;
  // Feeds one environment transition; returns diagnostics when it triggered
  // an update. `episode_end` marks the last step of an episode, whether or
  // not it is terminal.
  virtual std::optional<Diagnostics> observe(const Transition& t, bool episode_end) = 0;
  // Every parameter, including target networks, under unique names.
  virtual std::vector<num::Var> parameters() const = 0;

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 protected:
  void check_obs(std::span<const double> obs) const;

  AgentConfig cfg_;
  std::size_t obs_dim_, action_dim_;
  num::Rng rng_;
};

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim);
// Rebuilds from `path` + ".json" and the parameter file.
std::unique_ptr<Agent> load_agent(const std::filesystem::path& path);

// Shared by DDPG (single critic) and TD3 (twin critics, delayed actor).
class DeterministicActorCritic : public Agent {
 public:
  DeterministicActorCritic(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim);

  std::vector<double> act(std::span<const double> obs, bool explore) override;
  std::optional<Diagnostics> observe(const Transition& t, bool episode_end) override;
  std::vector<num::Var> parameters() const override;

  Diagnostics update(const Batch& b);

  struct Targets {
    num::Tensor q1, q2;  // target-critic estimates at (s', a'); q2 empty for DDPG
    num::Tensor y;       // td targets
  };
  // `noise` is the target-policy smoothing draw [n, a] (TD3), ignored by DDPG.
  Targets targets(const Batch& b, const num::Tensor& noise) const;
  num::Tensor smoothing_noise(std::size_t n);

  num::Mlp& actor() { return actor_; }
  num::Mlp& critic(int i) { return i == 0 ? critic1_ : critic2_; }
  const ReplayBuffer& replay() const { return replay_; }
  int updates() const { return updates_; }

 private:
  bool twin() const { return cfg_.algorithm == Algorithm::TD3; }
  num::Var policy(const num::Mlp& net, const num::Var& obs) const;

  num::Mlp actor_, actor_target_, critic1_, critic1_target_, critic2_, critic2_target_;
  std::unique_ptr<num::Adam> actor_opt_, critic1_opt_, critic2_opt_;
  ReplayBuffer replay_;
  int updates_ = 0;
  double last_actor_loss_ = 0.0;
};

class Sac : public Agent {
 public:
  Sac(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim);

  std::vector<double> act(std::span<const double> obs, bool explore) override;
  std::optional<Diagnostics> observe(const Transition& t, bool episode_end) override;
  std::vector<num::Var> parameters() const override;

  Diagnostics update(const Batch& b);
  double alpha() const;
  double target_entropy() const;

  struct Sample {
    num::Var action;  // tanh-squashed [n, a]
    num::Var logp;    // [n, 1]
  };
  // Reparameterised draw with the given standard-normal noise.
  Sample sample(const num::Var& obs, const num::Tensor& noise) const;

 private:
  num::Mlp actor_, critic1_, critic1_target_, critic2_, critic2_target_;
  num::Var log_alpha_;
  std::unique_ptr<num::Adam> actor_opt_, critic1_opt_, critic2_opt_, alpha_opt_;
  ReplayBuffer replay_;
};

class Ppo : public Agent {
 public:
  Ppo(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim);

  // Exploring actions are raw Gaussian draws clipped to [-1, 1]; the unclipped
  // draw, its log-probability and the value estimate are kept for observe().
  std::vector<double> act(std::span<const double> obs, bool explore) override;
  std::optional<Diagnostics> observe(const Transition& t, bool episode_end) override;
  std::vector<num::Var> parameters() const override;

  struct Rollout {
    num::Tensor obs, raw_action;  // [n, o], [n, a]
    std::vector<double> logp, advantages, returns;
  };
  Diagnostics update(const Rollout& r);
  // Log-density of raw actions under the current policy, [n, 1].
  num::Var log_prob(const num::Var& obs, const num::Tensor& raw_action) const;
  double value(std::span<const double> obs) const;

 private:
  num::Var log_std_rows(std::size_t n) const;

  num::Mlp policy_, value_;
  num::Var log_std_;  // [a, 1]
  std::unique_ptr<num::Adam> opt_;

  struct Pending {
    std::vector<double> raw_action;
    double logp = 0.0, value = 0.0;
  };
  std::optional<Pending> pending_;
  std::vector<std::vector<double>> obs_, raw_;
  std::vector<double> logp_, values_, rewards_, dones_;
};

}  // namespace rwl::agents
