#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "rwl/agents/agents.hpp"
#include "rwl/agents/config_json.hpp"
#include "rwl/numerics/checkpoint.hpp"

namespace rwl::agents {

using num::Tensor;
using num::Var;

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::DDPG: return "ddpg";
    case Algorithm::TD3: return "td3";
    case Algorithm::SAC: return "sac";
    case Algorithm::PPO: return "ppo";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "ddpg") return Algorithm::DDPG;
  if (l == "td3") return Algorithm::TD3;
  if (l == "sac") return Algorithm::SAC;
  if (l == "ppo") return Algorithm::PPO;
  throw std::invalid_argument("unknown algorithm '" + s + "' (expected ddpg, td3, sac or ppo)");
}

bool is_off_policy(Algorithm a) { return a != Algorithm::PPO; }

void AgentConfig::validate() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("agent config: " + what); };
  if (!(gamma >= 0.0 && gamma < 1.0)) bad("gamma must be in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) bad("tau must be in (0, 1]");
  if (!(clip_epsilon > 0.0)) bad("clip_epsilon must be positive");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) bad("gae_lambda must be in [0, 1]");
  if (hidden.empty()) bad("hidden needs at least one layer");
  if (batch_size == 0 || minibatch_size == 0 || rollout_steps == 0) bad("batch sizes must be positive");
  if (buffer_capacity < batch_size) bad("buffer_capacity must hold at least one batch");
  if (policy_delay < 1) bad("policy_delay must be >= 1");
  if (ppo_epochs < 1) bad("ppo_epochs must be >= 1");
  if (!(exploration_sigma >= 0.0) || !(target_noise >= 0.0) || !(target_noise_clip >= 0.0)) bad("noise scales must be >= 0");
  if (!(init_alpha > 0.0)) bad("init_alpha must be positive");
  for (double lr : {actor_lr, critic_lr, alpha_lr, ppo_lr}) {
    if (!(lr > 0.0)) bad("learning rates must be positive");
  }
}

void polyak_update(std::span<const Var> target, std::span<const Var> online, double tau) {
  if (target.size() != online.size()) throw num::ShapeError("polyak_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].shape() != online[i].shape()) {
      throw num::ShapeError("polyak_update: shape mismatch for " + target[i].name());
    }
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto t = target[i].node()->value.data();
    const auto o = online[i].value().data();
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = (1.0 - tau) * t[k] + tau * o[k];
  }
}

double td_target(double r, bool done, double q_next, double gamma, double entropy_term) {
  return done ? r : r + gamma * (q_next - entropy_term);
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const double> dones,
              double gamma, double lambda, double last_value) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("gae: rewards, values and dones differ in length");
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_v = k + 1 < n ? values[k + 1] : last_value;
    const double live = 1.0 - dones[k];
    const double delta = rewards[k] + gamma * live * next_v - values[k];
    running = delta + gamma * lambda * live * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
  }
  return out;
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.begin(), adv.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(out.size()));
  for (double& a : out) a = sd > 1e-8 ? (a - mean) / sd : 0.0;
  return out;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

Var ppo_policy_loss(const Var& logp_new, const Tensor& logp_old, const Tensor& advantages, double eps) {
  const Var ratio = num::exp(num::sub(logp_new, num::constant(logp_old)));
  const Var adv = num::constant(advantages);
  const Var unclipped = num::mul(ratio, adv);
  const Var clipped = num::mul(num::clamp(ratio, 1.0 - eps, 1.0 + eps), adv);
  return num::neg(num::mean(num::minimum(unclipped, clipped)));
}

Var critic_loss(const Var& q, const Tensor& target) { return num::loss(q, target, num::LossKind::MeanSquaredError); }

Agent::Agent(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim)
    : cfg_(cfg), obs_dim_(obs_dim), action_dim_(action_dim), rng_(num::mix_seed(cfg.seed, 0x6167656e74)) {
  cfg_.validate();
  if (obs_dim == 0 || action_dim == 0) throw std::invalid_argument("agent needs positive observation and action sizes");
}

void Agent::check_obs(std::span<const double> obs) const {
  if (obs.size() != obs_dim_) {
    throw std::invalid_argument("observation has " + std::to_string(obs.size()) + " components, agent expects " +
                                std::to_string(obs_dim_));
  }
}

void Agent::save(const std::filesystem::path& path) const {
  const auto params = parameters();
  num::save_checkpoint(path, num::snapshot(params));
  const nlohmann::json meta = {{"format", "rwl-agent"},
                               {"version", 1},
                               {"obs_dim", obs_dim_},
                               {"action_dim", action_dim_},
                               {"config", to_json(cfg_)}};
  std::ofstream f(path.string() + ".json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string() + ".json");
  f << meta.dump(1) << '\n';
}

void Agent::load(const std::filesystem::path& path) {
  const auto params = parameters();
  num::restore(params, num::load_checkpoint(path));
}

std::unique_ptr<Agent> make_agent(const AgentConfig& cfg, std::size_t obs_dim, std::size_t action_dim) {
  switch (cfg.algorithm) {
    case Algorithm::DDPG:
    case Algorithm::TD3: return std::make_unique<DeterministicActorCritic>(cfg, obs_dim, action_dim);
    case Algorithm::SAC: return std::make_unique<Sac>(cfg, obs_dim, action_dim);
    case Algorithm::PPO: return std::make_unique<Ppo>(cfg, obs_dim, action_dim);
  }
  throw std::invalid_argument("unknown algorithm");
}

std::unique_ptr<Agent> load_agent(const std::filesystem::path& path) {
  const std::string side = path.string() + ".json";
  std::ifstream f(side);
  if (!f) throw std::runtime_error("cannot open agent metadata " + side);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(f);
    if (meta.at("format").get<std::string>() != "rwl-agent" || meta.at("version").get<int>() != 1) {
      throw std::runtime_error("unsupported agent metadata in " + side);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt agent metadata " + side + ": " + e.what());
  }
  auto agent = make_agent(config_from_json(meta.at("config")), meta.at("obs_dim").get<std::size_t>(),
                          meta.at("action_dim").get<std::size_t>());
  agent->load(path);
  return agent;
}

}  // namespace rwl::agents
