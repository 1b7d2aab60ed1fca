#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rwl/numerics/rng.hpp"
#include "rwl/numerics/tensor.hpp"

namespace rwl::agents {

struct Transition {
  std::vector<double> obs;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_obs;
  // True only when the value of next_obs must not be bootstrapped.
  bool done = false;
};

// Column-stacked minibatch: obs [n, o], action [n, a], reward/done [n, 1].
struct Batch {
  num::Tensor obs, action, reward, next_obs, done;
  std::size_t size() const { return reward.size(); }
};

class ReplayError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t action_dim);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  // i = 0 is the oldest transition still held.
  Transition at(std::size_t i) const;
  // Uniform with replacement.
  Batch sample(std::size_t n, num::Rng& rng) const;
  Batch gather(const std::vector<std::size_t>& slots) const;

 private:
  std::size_t slot(std::size_t i) const { return (cursor_ + capacity_ - size_ + i) % capacity_; }

  std::size_t capacity_, obs_dim_, action_dim_;
  std::size_t size_ = 0, cursor_ = 0;
  std::vector<double> obs_, action_, reward_, next_obs_, done_;
};

}  // namespace rwl::agents
