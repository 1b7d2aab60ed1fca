#include "rwl/rewards/rewards.hpp"

#include <algorithm>

namespace rwl::rewards {

std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::Dense: return "dense";
    case RewardKind::Sparse: return "sparse";
    case RewardKind::VisualDense: return "visual-dense";
    case RewardKind::VisualSparse: return "visual-sparse";
  }
  return "?";
}

RewardKind parse_reward_kind(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return c == '_' ? '-' : std::tolower(c); });
  if (l == "dense") return RewardKind::Dense;
  if (l == "sparse") return RewardKind::Sparse;
  if (l == "visual-dense" || l == "visualdense") return RewardKind::VisualDense;
  if (l == "visual-sparse" || l == "visualsparse") return RewardKind::VisualSparse;
  throw RewardError("unknown reward kind '" + s + "' (expected dense, sparse, visual-dense or visual-sparse)");
}

bool is_visual(RewardKind k) { return k == RewardKind::VisualDense || k == RewardKind::VisualSparse; }

double visual_dense(double p) { return 2.0 * p - 1.0; }

double visual_sparse(double p) { return p >= 0.5 ? 0.0 : -1.0; }

double from_probability(RewardKind k, double p) {
  if (k == RewardKind::VisualDense) return visual_dense(p);
  if (k == RewardKind::VisualSparse) return visual_sparse(p);
  throw RewardError(to_string(k) + " reward is not derived from a probability");
}

RewardProvider::RewardProvider(RewardKind kind, envs::TaskId task,
                               std::shared_ptr<const clf::ClassifierModel> classifier, render::RenderConfig render)
    : kind_(kind), task_(task), classifier_(std::move(classifier)), render_(render) {
  if (is_visual(kind_)) {
    if (!classifier_) throw RewardError(to_string(kind_) + " reward needs a bound classifier");
    if (classifier_->arch().resolution != render_.resolution) {
      throw RewardError("classifier expects " + std::to_string(classifier_->arch().resolution) +
                        " px frames but rendering is configured for " + std::to_string(render_.resolution));
    }
  }
}

double RewardProvider::compute(const envs::EnvState& state, const render::Image* image) const {
  if (envs::task_of(state) != task_) throw RewardError("state belongs to another task");
  switch (kind_) {
    case RewardKind::Dense: return envs::oracle_dense(state);
    case RewardKind::Sparse: return envs::oracle_sparse(state);
    case RewardKind::VisualDense:
    case RewardKind::VisualSparse:
      if (!image) throw RewardError(to_string(kind_) + " reward needs the post-step frame");
      return from_probability(kind_, classifier_->predict(*image).p_success);
  }
  return 0.0;
}

double RewardProvider::reward(const envs::EnvState& state, const render::Image* image) {
  const auto t0 = std::chrono::steady_clock::now();
  const double r = compute(state, image);
  record(std::chrono::steady_clock::now() - t0);
  return r;
}

double RewardProvider::reward(const envs::EnvState& state) {
  const auto t0 = std::chrono::steady_clock::now();
  double r;
  if (is_visual(kind_)) {
    const render::Image frame = render::render(state, render_);
    r = compute(state, &frame);
  } else {
    r = compute(state, nullptr);
  }
  record(std::chrono::steady_clock::now() - t0);
  return r;
}

void RewardProvider::record(std::chrono::steady_clock::duration d) {
  const double ms = std::chrono::duration<double, std::milli>(d).count();
  total_ms_ += ms;
  max_ms_ = std::max(max_ms_, ms);
  ++calls_;
}

LatencyStats RewardProvider::latency_stats() const {
  if (calls_ == 0) throw std::logic_error("no reward calls recorded since the last reset");
  return {total_ms_ / static_cast<double>(calls_), max_ms_, calls_};
}

void RewardProvider::reset_latency() {
  total_ms_ = max_ms_ = 0.0;
  calls_ = 0;
}

}  // namespace rwl::rewards
