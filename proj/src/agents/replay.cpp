#include "rwl/agents/replay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rwl::agents {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
  if (capacity == 0) throw ReplayError("replay capacity must be positive");
  obs_.resize(capacity * obs_dim);
  next_obs_.resize(capacity * obs_dim);
  action_.resize(capacity * action_dim);
  reward_.resize(capacity);
  done_.resize(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.obs.size() != obs_dim_ || t.next_obs.size() != obs_dim_ || t.action.size() != action_dim_) {
    throw ReplayError("transition dimensions do not match the buffer");
  }
  auto finite = [](const std::vector<double>& v) { return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }); };
  if (!finite(t.obs) || !finite(t.next_obs) || !finite(t.action) || !std::isfinite(t.reward)) {
    throw ReplayError("transition has non-finite entries");
  }
  const std::size_t c = cursor_;
  std::copy(t.obs.begin(), t.obs.end(), obs_.begin() + c * obs_dim_);
  std::copy(t.next_obs.begin(), t.next_obs.end(), next_obs_.begin() + c * obs_dim_);
  std::copy(t.action.begin(), t.action.end(), action_.begin() + c * action_dim_);
  reward_[c] = t.reward;
  done_[c] = t.done ? 1.0 : 0.0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ReplayError("replay index " + std::to_string(i) + " out of range");
  const std::size_t s = slot(i);
  Transition t;
  t.obs.assign(obs_.begin() + s * obs_dim_, obs_.begin() + (s + 1) * obs_dim_);
  t.next_obs.assign(next_obs_.begin() + s * obs_dim_, next_obs_.begin() + (s + 1) * obs_dim_);
  t.action.assign(action_.begin() + s * action_dim_, action_.begin() + (s + 1) * action_dim_);
  t.reward = reward_[s];
  t.done = done_[s] != 0.0;
  return t;
}

Batch ReplayBuffer::sample(std::size_t n, num::Rng& rng) const {
  if (n == 0 || size_ < n) {
    throw ReplayError("cannot sample " + std::to_string(n) + " transitions from a buffer holding " +
                      std::to_string(size_));
  }
  std::vector<std::size_t> slots(n);
  for (auto& s : slots) s = rng.below(size_);
  return gather(slots);
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& idx) const {
  const std::size_t n = idx.size();
  Batch b{num::Tensor({n, obs_dim_}), num::Tensor({n, action_dim_}), num::Tensor({n, 1}), num::Tensor({n, obs_dim_}),
          num::Tensor({n, 1})};
  for (std::size_t k = 0; k < n; ++k) {
    if (idx[k] >= size_) throw ReplayError("replay index out of range");
    const std::size_t s = slot(idx[k]);
    std::copy_n(obs_.begin() + s * obs_dim_, obs_dim_, b.obs.raw() + k * obs_dim_);
    std::copy_n(next_obs_.begin() + s * obs_dim_, obs_dim_, b.next_obs.raw() + k * obs_dim_);
    std::copy_n(action_.begin() + s * action_dim_, action_dim_, b.action.raw() + k * action_dim_);
    b.reward[k] = reward_[s];
    b.done[k] = done_[s];
  }
  return b;
}

}  // namespace rwl::agents
