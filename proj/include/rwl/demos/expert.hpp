#pragma once

#include <vector>

#include "rwl/envs/envs.hpp"

namespace rwl::demos {

// Hand-written controller per task; output components lie in [-1, 1].
//   Pendulum: energy-shaping swing-up, PD hold near upright.
//   Reacher:  proportional joint control toward the nearest IK branch.
//   Pusher:   orbit behind the object, then push along the line to the target.
//   Fetch:    proportional Cartesian velocity.
std::vector<double> scripted_expert(const envs::EnvState& state);

}  // namespace rwl::demos
