#include "rwl/experiments/run.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "rwl/agents/config_json.hpp"
#include "rwl/classifier/classifier.hpp"
#include "rwl/numerics/rng.hpp"

namespace rwl::exp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTrainStream = 0x747261696e;
constexpr std::uint64_t kEvalStream = 0x6576616c;
constexpr std::uint64_t kAgentStream = 0x6167656e74;
constexpr std::uint64_t kWarmupStream = 0x7761726d;

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RunDirectoryError("cannot write " + path.string());
  os << text;
  if (!os) throw RunDirectoryError("write failed for " + path.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::shared_ptr<const clf::ClassifierModel> load_classifier(const RunConfig& cfg) {
  if (!rewards::is_visual(cfg.reward)) return nullptr;
  try {
    return std::make_shared<const clf::ClassifierModel>(clf::load_model(*cfg.classifier));
  } catch (const std::exception& e) {
    throw ConfigError("cannot load classifier " + cfg.classifier->string() + ": " + e.what());
  }
}

agents::AgentConfig derived_agent_config(const RunConfig& cfg) {
  agents::AgentConfig a = cfg.agent;
  a.seed = num::mix_seed(cfg.seed, kAgentStream);
  return a;
}

}  // namespace

void RunConfig::validate() const {
  try {
    agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
  if (eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
  if (curve_episodes <= 0) throw ConfigError("curve_episodes must be positive");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (!render::is_supported_resolution(render.resolution)) {
    throw ConfigError("unsupported render resolution " + std::to_string(render.resolution));
  }
  if (rewards::is_visual(reward)) {
    if (!classifier) throw ConfigError("reward '" + rewards::to_string(reward) + "' needs a classifier checkpoint");
    if (!fs::exists(*classifier)) throw ConfigError("classifier checkpoint not found: " + classifier->string());
  }
}

std::string RunConfig::cell() const {
  return std::string(envs::task_name(task)) + "-" + agents::to_string(agent.algorithm) + "-" +
         rewards::to_string(reward);
}

json to_json(const RunConfig& c) {
  json agent = agents::to_json(c.agent);
  agent.erase("seed");
  return {{"format", "rwl-run"},
          {"version", kRunFormatVersion},
          {"task", std::string(envs::task_name(c.task))},
          {"reward", rewards::to_string(c.reward)},
          {"classifier", c.classifier ? json(c.classifier->string()) : json(nullptr)},
          {"seed", c.seed},
          {"total_steps", c.total_steps},
          {"eval_episodes", c.eval_episodes},
          {"eval_interval", c.eval_interval},
          {"curve_episodes", c.curve_episodes},
          {"render", {{"resolution", c.render.resolution}, {"occlude_target", c.render.occlude_target}}},
          {"agent", agent}};
}

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> keys = {"format", "version",       "task",           "reward",
                                             "classifier", "seed",      "total_steps",    "eval_episodes",
                                             "eval_interval", "curve_episodes", "render", "agent"};
  for (const auto& [key, _] : j.items()) {
    if (!keys.contains(key)) throw ConfigError("unknown run config key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("format") && j.at("format").get<std::string>() != "rwl-run") {
      throw ConfigError("not a run config (format " + j.at("format").dump() + ")");
    }
    if (j.contains("version") && j.at("version").get<int>() != kRunFormatVersion) {
      throw ConfigError("run config version " + j.at("version").dump() + " is not " +
                        std::to_string(kRunFormatVersion));
    }
    if (!j.contains("task")) throw ConfigError("run config needs 'task'");
    c.task = envs::parse_task(j.at("task").get<std::string>());
    if (j.contains("reward")) c.reward = rewards::parse_reward_kind(j.at("reward").get<std::string>());
    if (j.contains("classifier") && !j.at("classifier").is_null()) {
      fs::path p = j.at("classifier").get<std::string>();
      c.classifier = p.is_relative() && !base.empty() ? base / p : p;
    }
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("seed", c.seed);
    get("total_steps", c.total_steps);
    get("eval_episodes", c.eval_episodes);
    get("eval_interval", c.eval_interval);
    get("curve_episodes", c.curve_episodes);
    if (j.contains("render")) {
      const json& r = j.at("render");
      for (const auto& [key, _] : r.items()) {
        if (key != "resolution" && key != "occlude_target") throw ConfigError("unknown render key '" + key + "'");
      }
      if (r.contains("resolution")) c.render.resolution = r.at("resolution").get<int>();
      if (r.contains("occlude_target")) c.render.occlude_target = r.at("occlude_target").get<bool>();
    }
    if (j.contains("agent")) {
      if (j.at("agent").contains("seed")) throw ConfigError("agent.seed is derived from the run seed; set 'seed'");
      c.agent = agents::config_from_json(j.at("agent"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read run config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

std::uint64_t eval_episode_seed(std::uint64_t run_seed, int k) {
  return num::mix_seed(num::mix_seed(run_seed, kEvalStream), static_cast<std::uint64_t>(k));
}

std::uint64_t train_episode_seed(std::uint64_t run_seed, std::uint64_t k) {
  return num::mix_seed(num::mix_seed(run_seed, kTrainStream), k);
}

EvalReport evaluate_policy(const Policy& policy, envs::TaskId task, int n, std::uint64_t seed,
                           rewards::RewardProvider* reward) {
  if (n <= 0) throw std::invalid_argument("evaluation needs at least one episode");
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport rep;
  int successes = 0;
  long total_length = 0;
  double total_return = 0.0;
  for (int k = 0; k < n; ++k) {
    envs::Environment env(task, eval_episode_seed(seed, k));
    EpisodeOutcome ep;
    while (!env.done()) {
      const envs::StepResult r = env.step(policy(env.state()));
      ep.ret += reward ? reward->reward(r.state) : envs::oracle_dense(r.state);
      ep.length = r.steps_elapsed;
      ep.success = r.success_hold;
    }
    successes += ep.success ? 1 : 0;
    total_length += ep.length;
    total_return += ep.ret;
    rep.episodes.push_back(ep);
  }
  rep.success_rate = static_cast<double>(successes) / n;
  rep.avg_length = static_cast<double>(total_length) / n;
  rep.return_mean = total_return / n;
  rep.test_seconds = seconds_since(t0);
  return rep;
}

EvalReport evaluate_agent(agents::Agent& agent, envs::TaskId task, int n, std::uint64_t seed,
                          rewards::RewardProvider* reward) {
  if (agent.obs_dim() != envs::observation_dim(task) || agent.action_dim() != envs::action_dim(task)) {
    throw ConfigError("agent dimensions (" + std::to_string(agent.obs_dim()) + ", " +
                      std::to_string(agent.action_dim()) + ") do not fit task " + std::string(envs::task_name(task)));
  }
  return evaluate_policy([&](const envs::EnvState& s) { return agent.act(envs::observe(s), false); }, task, n, seed,
                         reward);
}

EvalReport evaluate_checkpoint(const fs::path& agent_path, const RunConfig& cfg, int n) {
  auto agent = agents::load_agent(agent_path);
  rewards::RewardProvider reward(cfg.reward, cfg.task, load_classifier(cfg), cfg.render);
  return evaluate_agent(*agent, cfg.task, n, cfg.seed, &reward);
}

std::string curve_csv_header() { return "step,return_mean,success_rate"; }

std::string curve_csv_row(const CurvePoint& p) {
  return std::to_string(p.step) + "," + fmt(p.return_mean) + "," + fmt(p.success_rate);
}

std::string eval_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "episode,success,length,return\n";
  for (std::size_t i = 0; i < r.episodes.size(); ++i) {
    const auto& e = r.episodes[i];
    os << i << ',' << (e.success ? 1 : 0) << ',' << e.length << ',' << fmt(e.ret) << '\n';
  }
  return os.str();
}

std::string format_hhmm(double seconds) {
  const long minutes = static_cast<long>(std::max(0.0, seconds) / 60.0);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02ld:%02ld", minutes / 60, minutes % 60);
  return buf;
}

RunResult run_training(const RunConfig& cfg, const fs::path& dir, const RunOptions& options) {
  cfg.validate();
  const auto classifier = load_classifier(cfg);
  rewards::RewardProvider train_reward(cfg.reward, cfg.task, classifier, cfg.render);
  rewards::RewardProvider eval_reward(cfg.reward, cfg.task, classifier, cfg.render);
  auto agent = agents::make_agent(derived_agent_config(cfg), envs::observation_dim(cfg.task),
                                  envs::action_dim(cfg.task));

  if (fs::exists(dir) && !fs::is_empty(dir) && !options.force) {
    throw RunDirectoryError("run directory " + dir.string() + " is not empty (use --force to reuse it)");
  }
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  std::ofstream curve_os(dir / "curve.csv", std::ios::trunc);
  if (!curve_os) throw RunDirectoryError("cannot write " + (dir / "curve.csv").string());
  curve_os << curve_csv_header() << '\n' << std::flush;

  RunResult res;
  res.dir = dir;
  const bool warm = agents::is_off_policy(cfg.agent.algorithm);
  num::Rng warm_rng(num::mix_seed(cfg.seed, kWarmupStream));
  const std::size_t adim = envs::action_dim(cfg.task);
  std::uint64_t episode = 0;
  envs::Environment env(cfg.task, train_episode_seed(cfg.seed, episode));

  auto record_point = [&](std::size_t step) {
    const EvalReport r = evaluate_agent(*agent, cfg.task, cfg.curve_episodes, cfg.seed, &eval_reward);
    const CurvePoint p{step, r.return_mean, r.success_rate};
    curve_os << curve_csv_row(p) << '\n' << std::flush;
    res.curve.push_back(p);
    if (options.on_curve_point) options.on_curve_point(p);
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t s = 0; s < cfg.total_steps; ++s) {
    const std::vector<double> obs = envs::observe(env.state());
    std::vector<double> action;
    if (warm && s < cfg.agent.warmup_steps) {
      action.resize(adim);
      for (double& a : action) a = warm_rng.uniform(-1.0, 1.0);
    } else {
      action = agent->act(obs, true);
    }
    const envs::StepResult r = env.step(action);
    const double reward = train_reward.reward(r.state);
    // Success-hold ends the episode but the task continues to exist, so its
    // value still bootstraps; only the episode boundary is signalled.
    const agents::Transition t{obs, action, reward, envs::observe(r.state), false};
    try {
      agent->observe(t, r.terminated);
    } catch (const agents::TrainingDivergedError& e) {
      throw agents::TrainingDivergedError(cfg.cell() + " seed " + std::to_string(cfg.seed) + " at step " +
                                          std::to_string(s + 1) + ": " + e.what());
    }
    if (r.terminated) env = envs::Environment(cfg.task, train_episode_seed(cfg.seed, ++episode));
    if ((s + 1) % cfg.eval_interval == 0 || s + 1 == cfg.total_steps) record_point(s + 1);
  }
  res.timing.train_seconds = seconds_since(t0);
  agent->save(dir / "agent.bin");

  // Parameters are stored in single precision; evaluating the reloaded agent
  // makes eval.csv reproducible from the checkpoint alone.
  const auto saved = agents::load_agent(dir / "agent.bin");
  res.eval = evaluate_agent(*saved, cfg.task, cfg.eval_episodes, cfg.seed, &eval_reward);
  res.timing.test_seconds_total = res.eval.test_seconds;
  res.timing.reward_latency_ms_mean = train_reward.latency_stats().mean_ms;
  write_text(dir / "eval.csv", eval_csv(res.eval));
  const json timing = {{"train_seconds", res.timing.train_seconds},
                       {"train_hhmm", format_hhmm(res.timing.train_seconds)},
                       {"test_seconds_total", res.timing.test_seconds_total},
                       {"reward_latency_ms_mean", res.timing.reward_latency_ms_mean},
                       {"success_rate", res.eval.success_rate},
                       {"avg_length", res.eval.avg_length}};
  write_text(dir / "timing.json", timing.dump(2) + "\n");
  return res;
}

}  // namespace rwl::exp
