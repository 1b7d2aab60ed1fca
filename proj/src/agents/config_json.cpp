#include "rwl/agents/config_json.hpp"

#include <set>

namespace rwl::agents {

nlohmann::json to_json(const AgentConfig& c) {
  nlohmann::json j = {{"algorithm", to_string(c.algorithm)},
                      {"gamma", c.gamma},
                      {"tau", c.tau},
                      {"hidden", c.hidden},
                      {"actor_lr", c.actor_lr},
                      {"critic_lr", c.critic_lr},
                      {"seed", c.seed},
                      {"batch_size", c.batch_size},
                      {"buffer_capacity", c.buffer_capacity},
                      {"warmup_steps", c.warmup_steps},
                      {"exploration_sigma", c.exploration_sigma},
                      {"policy_delay", c.policy_delay},
                      {"target_noise", c.target_noise},
                      {"target_noise_clip", c.target_noise_clip},
                      {"init_alpha", c.init_alpha},
                      {"alpha_lr", c.alpha_lr},
                      {"rollout_steps", c.rollout_steps},
                      {"ppo_epochs", c.ppo_epochs},
                      {"minibatch_size", c.minibatch_size},
                      {"clip_epsilon", c.clip_epsilon},
                      {"gae_lambda", c.gae_lambda},
                      {"ppo_lr", c.ppo_lr},
                      {"value_coef", c.value_coef},
                      {"entropy_coef", c.entropy_coef},
                      {"max_grad_norm", c.max_grad_norm}};
  j["target_entropy"] = c.target_entropy ? nlohmann::json(*c.target_entropy) : nlohmann::json(nullptr);
  return j;
}

AgentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("agent config must be a JSON object");
  AgentConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw std::invalid_argument("unknown agent config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    if (j.contains("algorithm")) c.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    get("gamma", c.gamma);
    get("tau", c.tau);
    get("hidden", c.hidden);
    get("actor_lr", c.actor_lr);
    get("critic_lr", c.critic_lr);
    get("seed", c.seed);
    get("batch_size", c.batch_size);
    get("buffer_capacity", c.buffer_capacity);
    get("warmup_steps", c.warmup_steps);
    get("exploration_sigma", c.exploration_sigma);
    get("policy_delay", c.policy_delay);
    get("target_noise", c.target_noise);
    get("target_noise_clip", c.target_noise_clip);
    get("init_alpha", c.init_alpha);
    get("alpha_lr", c.alpha_lr);
    get("rollout_steps", c.rollout_steps);
    get("ppo_epochs", c.ppo_epochs);
    get("minibatch_size", c.minibatch_size);
    get("clip_epsilon", c.clip_epsilon);
    get("gae_lambda", c.gae_lambda);
    get("ppo_lr", c.ppo_lr);
    get("value_coef", c.value_coef);
    get("entropy_coef", c.entropy_coef);
    get("max_grad_norm", c.max_grad_norm);
    if (j.contains("target_entropy") && !j.at("target_entropy").is_null()) {
      c.target_entropy = j.at("target_entropy").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("agent config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace rwl::agents
