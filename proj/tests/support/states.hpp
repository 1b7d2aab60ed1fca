#pragma once

#include <numbers>

#include "rwl/envs/envs.hpp"
#include "rwl/numerics/rng.hpp"

namespace rwl::testing {

inline constexpr double kPi = std::numbers::pi;

// Random state drawn near and far from success so both sides of each
// threshold are exercised.
inline envs::EnvState sample_state(envs::TaskId task, rwl::num::Rng& rng) {
  const double near = rng.uniform() < 0.5 ? 0.02 : 1.0;
  switch (task) {
    case envs::TaskId::Pendulum:
      return envs::PendulumState{envs::wrap_angle(rng.uniform(-kPi, kPi) * near * 5.0), rng.uniform(-8.0, 8.0)};
    case envs::TaskId::Reacher: {
      envs::ReacherState s{rng.uniform(-kPi, kPi), rng.uniform(-kPi, kPi), 0.0, 0.0};
      const envs::Point2 tip = envs::forward_kinematics(s.q1, s.q2);
      s.target_x = tip.x + rng.uniform(-1.0, 1.0) * near * 0.6;
      s.target_y = tip.y + rng.uniform(-1.0, 1.0) * near * 0.6;
      return s;
    }
    case envs::TaskId::Pusher: {
      envs::PusherState s;
      s.object_x = s.target_x + rng.uniform(-1.0, 1.0) * near * 0.5;
      s.object_y = s.target_y + rng.uniform(-1.0, 1.0) * near * 0.5;
      s.effector_x = rng.uniform(-0.28, 0.28);
      s.effector_y = rng.uniform(-0.28, 0.28);
      return s;
    }
    case envs::TaskId::FetchReach: {
      envs::FetchState s{rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), 0, 0, 0};
      s.target_x = s.gripper_x + rng.uniform(-1.0, 1.0) * near * 0.3;
      s.target_y = s.gripper_y + rng.uniform(-1.0, 1.0) * near * 0.3;
      s.target_z = s.gripper_z + rng.uniform(-1.0, 1.0) * near * 0.3;
      return s;
    }
  }
  return envs::PendulumState{};
}

}  // namespace rwl::testing
