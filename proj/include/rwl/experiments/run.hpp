#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwl/agents/agents.hpp"
#include "rwl/envs/envs.hpp"
#include "rwl/render/render.hpp"
#include "rwl/rewards/rewards.hpp"

namespace rwl::exp {

inline constexpr int kRunFormatVersion = 1;
inline constexpr std::uint64_t kDefaultSeeds[] = {1, 2, 3};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RunDirectoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  envs::TaskId task = envs::TaskId::Pendulum;
  agents::AgentConfig agent;  // agent.seed is derived from `seed`
  rewards::RewardKind reward = rewards::RewardKind::Dense;
  std::optional<std::filesystem::path> classifier;  // visual kinds only
  std::uint64_t seed = 1;
  std::size_t total_steps = 200'000;
  int eval_episodes = 100;
  std::size_t eval_interval = 10'000;
  int curve_episodes = 10;  // episodes per learning-curve point
  render::RenderConfig render;

  // Throws ConfigError; checks that a visual run's checkpoint exists.
  void validate() const;
  // "<task>-<algorithm>-<reward>", the table cell a run belongs to.
  std::string cell() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Rejects unknown keys. Relative classifier paths resolve against `base`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
RunConfig load_run_config(const std::filesystem::path& path);

struct EpisodeOutcome {
  bool success = false;  // ended through success-hold
  int length = 0;
  double ret = 0.0;  // undiscounted, under the evaluation reward
};

struct EvalReport {
  double success_rate = 0.0;
  double avg_length = 0.0;
  double return_mean = 0.0;
  std::vector<EpisodeOutcome> episodes;
  double test_seconds = 0.0;
};

using Policy = std::function<std::vector<double>(const envs::EnvState&)>;

// Seed of evaluation episode k; disjoint from the training stream.
std::uint64_t eval_episode_seed(std::uint64_t run_seed, int k);
std::uint64_t train_episode_seed(std::uint64_t run_seed, std::uint64_t k);

// Runs `n` episodes from eval_episode_seed(seed, 0..n-1). Returns are summed
// from `reward` when given, else from the oracle dense reward.
EvalReport evaluate_policy(const Policy& policy, envs::TaskId task, int n, std::uint64_t seed,
                           rewards::RewardProvider* reward = nullptr);
// Deterministic (explore = false) agent actions.
EvalReport evaluate_agent(agents::Agent& agent, envs::TaskId task, int n, std::uint64_t seed,
                          rewards::RewardProvider* reward = nullptr);
// Loads an agent checkpoint; throws ConfigError if its dimensions do not fit
// cfg.task.
EvalReport evaluate_checkpoint(const std::filesystem::path& agent_path, const RunConfig& cfg, int n);

struct CurvePoint {
  std::size_t step = 0;
  double return_mean = 0.0;
  double success_rate = 0.0;
};

struct Timing {
  double train_seconds = 0.0;
  double test_seconds_total = 0.0;
  double reward_latency_ms_mean = 0.0;
};

struct RunResult {
  std::filesystem::path dir;
  std::vector<CurvePoint> curve;
  EvalReport eval;
  Timing timing;
};

struct RunOptions {
  bool force = false;  // reuse a non-empty run directory
  std::function<void(const CurvePoint&)> on_curve_point;
};

// Writes config.json, curve.csv (appended at each evaluation), agent.bin,
// eval.csv and timing.json under `dir`. Off-policy agents act uniformly at
// random for their warm-up steps. Configuration and checkpoint errors are
// raised before the directory is created.
RunResult run_training(const RunConfig& cfg, const std::filesystem::path& dir, const RunOptions& options = {});

std::string curve_csv_header();
std::string curve_csv_row(const CurvePoint& p);
std::string eval_csv(const EvalReport& r);
// "HH:MM", minutes rounded down.
std::string format_hhmm(double seconds);

}  // namespace rwl::exp
