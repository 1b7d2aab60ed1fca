#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>

#include "rwl/classifier/classifier.hpp"
#include "rwl/envs/envs.hpp"
#include "rwl/render/render.hpp"

namespace rwl::rewards {

enum class RewardKind { Dense, Sparse, VisualDense, VisualSparse };
std::string to_string(RewardKind k);
RewardKind parse_reward_kind(const std::string& s);
bool is_visual(RewardKind k);

// 2P - 1.
double visual_dense(double p);
// 0 when P >= 0.5, else -1.
double visual_sparse(double p);
// Visual reward of the given kind from a success probability.
double from_probability(RewardKind k, double p);

class RewardError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LatencyStats {
  double mean_ms = 0.0;
  double max_ms = 0.0;
  std::size_t calls = 0;
};

class RewardProvider {
 public:
  // Oracle kinds need no classifier; visual kinds throw RewardError without one.
  RewardProvider(RewardKind kind, envs::TaskId task, std::shared_ptr<const clf::ClassifierModel> classifier = nullptr,
                 render::RenderConfig render = {});

  RewardKind kind() const { return kind_; }
  envs::TaskId task() const { return task_; }
  const render::RenderConfig& render_config() const { return render_; }

  // `image` is the post-step frame; visual kinds require it.
  double reward(const envs::EnvState& state, const render::Image* image);
  // Renders the post-step frame itself when the kind needs one; the render
  // counts towards the recorded latency.
  double reward(const envs::EnvState& state);

  LatencyStats latency_stats() const;
  void reset_latency();

 private:
  double compute(const envs::EnvState& state, const render::Image* image) const;
  void record(std::chrono::steady_clock::duration d);

  RewardKind kind_;
  envs::TaskId task_;
  std::shared_ptr<const clf::ClassifierModel> classifier_;
  render::RenderConfig render_;
  double total_ms_ = 0.0, max_ms_ = 0.0;
  std::size_t calls_ = 0;
};

}  // namespace rwl::rewards
