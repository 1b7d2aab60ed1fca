#include "rwl/envs/envs.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "rwl/numerics/rng.hpp"

namespace rwl::envs {
namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double hypot3(double x, double y, double z) { return std::sqrt(x * x + y * y + z * z); }

std::vector<double> clamped_action(TaskId task, std::span<const double> action) {
  if (action.size() != action_dim(task)) {
    throw InvalidActionError(std::string(task_name(task)) + ": expected action of dimension " +
                             std::to_string(action_dim(task)) + ", got " + std::to_string(action.size()));
  }
  std::vector<double> a(action.begin(), action.end());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) {
      throw InvalidActionError(std::string(task_name(task)) + ": non-finite action component " + std::to_string(i));
    }
    a[i] = std::clamp(a[i], -1.0, 1.0);
  }
  return a;
}

PendulumState reset_pendulum(num::Rng& rng) {
  PendulumState s;
  s.phi = wrap_angle(rng.uniform(-kPi, kPi));
  s.omega = rng.uniform(-1.0, 1.0);
  return s;
}

ReacherState reset_reacher(num::Rng& rng) {
  using namespace reacher;
  ReacherState s;
  for (;;) {
    const double x = rng.uniform(-kTargetMaxRadius, kTargetMaxRadius);
    const double y = rng.uniform(-kTargetMaxRadius, kTargetMaxRadius);
    const double r = std::hypot(x, y);
    if (r >= kTargetMinRadius && r <= kTargetMaxRadius) {
      s.target_x = x;
      s.target_y = y;
      break;
    }
  }
  // Start clearly away from the goal.
  for (;;) {
    s.q1 = wrap_angle(rng.uniform(-kPi, kPi));
    s.q2 = wrap_angle(rng.uniform(-kPi, kPi));
    const Point2 tip = forward_kinematics(s.q1, s.q2);
    if (std::hypot(tip.x - s.target_x, tip.y - s.target_y) > 0.05) break;
  }
  return s;
}

PusherState reset_pusher(num::Rng& rng) {
  using namespace pusher;
  PusherState s;
  for (;;) {
    s.object_x = rng.uniform(-0.2, 0.2);
    s.object_y = rng.uniform(-0.15, 0.05);
    if (std::hypot(s.object_x - kTargetX, s.object_y - kTargetY) >= 0.08) break;
  }
  s.effector_x = rng.uniform(-0.2, 0.2);
  s.effector_y = -0.25;
  return s;
}

FetchState reset_fetch(num::Rng& rng) {
  using namespace fetch;
  FetchState s;
  for (;;) {
    s.target_x = rng.uniform(-kHalfExtent, kHalfExtent);
    s.target_y = rng.uniform(-kHalfExtent, kHalfExtent);
    s.target_z = rng.uniform(-kHalfExtent, kHalfExtent);
    if (hypot3(s.target_x, s.target_y, s.target_z) >= 0.05) break;
  }
  return s;
}

PendulumState advance_pendulum(const PendulumState& s, double a) {
  using namespace pendulum;
  const double u = kMaxTorque * a;
  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(s.phi) + 3.0 / (kMass * kLength * kLength) * u;
  PendulumState n;
  n.omega = std::clamp(s.omega + accel * kDt, -kMaxSpeed, kMaxSpeed);
  n.phi = wrap_angle(s.phi + n.omega * kDt);
  return n;
}

ReacherState advance_reacher(const ReacherState& s, std::span<const double> a) {
  ReacherState n = s;
  n.q1 = wrap_angle(s.q1 + reacher::kMaxJointStep * a[0]);
  n.q2 = wrap_angle(s.q2 + reacher::kMaxJointStep * a[1]);
  return n;
}

// Quasi-static push: on overlap the object slides out along the line of
// centres until the two disks just touch.
PusherState advance_pusher(const PusherState& s, std::span<const double> a) {
  using namespace pusher;
  PusherState n = s;
  const double lim_e = kHalfExtent - kEffectorRadius;
  n.effector_x = std::clamp(s.effector_x + kMaxStep * a[0], -lim_e, lim_e);
  n.effector_y = std::clamp(s.effector_y + kMaxStep * a[1], -lim_e, lim_e);
  const double contact = kEffectorRadius + kObjectRadius;
  double dx = n.object_x - n.effector_x;
  double dy = n.object_y - n.effector_y;
  double d = std::hypot(dx, dy);
  if (d < contact) {
    if (d < 1e-12) {
      // Degenerate overlap: push along the effector motion.
      dx = a[0];
      dy = a[1];
      d = std::hypot(dx, dy);
      if (d < 1e-12) {
        dx = 0.0;
        dy = 1.0;
        d = 1.0;
      }
    }
    n.object_x = n.effector_x + dx / d * contact;
    n.object_y = n.effector_y + dy / d * contact;
    const double lim_o = kHalfExtent - kObjectRadius;
    n.object_x = std::clamp(n.object_x, -lim_o, lim_o);
    n.object_y = std::clamp(n.object_y, -lim_o, lim_o);
  }
  return n;
}

FetchState advance_fetch(const FetchState& s, std::span<const double> a) {
  using namespace fetch;
  FetchState n = s;
  n.gripper_x = std::clamp(s.gripper_x + kMaxStep * a[0], -kHalfExtent, kHalfExtent);
  n.gripper_y = std::clamp(s.gripper_y + kMaxStep * a[1], -kHalfExtent, kHalfExtent);
  n.gripper_z = std::clamp(s.gripper_z + kMaxStep * a[2], -kHalfExtent, kHalfExtent);
  return n;
}

}  // namespace

std::string_view task_name(TaskId task) {
  switch (task) {
    case TaskId::Pendulum:
      return "pendulum";
    case TaskId::Reacher:
      return "reacher";
    case TaskId::Pusher:
      return "pusher";
    case TaskId::FetchReach:
      return "fetch";
  }
  return "unknown";
}

TaskId parse_task(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "pendulum") return TaskId::Pendulum;
  if (s == "reacher") return TaskId::Reacher;
  if (s == "pusher") return TaskId::Pusher;
  if (s == "fetch" || s == "fetchreach" || s == "fetch-reach" || s == "fetch_reach") return TaskId::FetchReach;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

TaskId task_of(const EnvState& state) { return static_cast<TaskId>(state.index()); }

std::size_t action_dim(TaskId task) {
  switch (task) {
    case TaskId::Pendulum:
      return 1;
    case TaskId::Reacher:
    case TaskId::Pusher:
      return 2;
    case TaskId::FetchReach:
      return 3;
  }
  return 0;
}

std::size_t observation_dim(TaskId task) {
  switch (task) {
    case TaskId::Pendulum:
      return 3;
    case TaskId::Reacher:
      return 8;
    case TaskId::Pusher:
      return 10;
    case TaskId::FetchReach:
      return 9;
  }
  return 0;
}

std::size_t state_dim(TaskId task) {
  switch (task) {
    case TaskId::Pendulum:
      return 2;
    case TaskId::Reacher:
      return 4;
    case TaskId::Pusher:
    case TaskId::FetchReach:
      return 6;
  }
  return 0;
}

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

Point2 forward_kinematics(double q1, double q2) {
  return {reacher::kLink1 * std::cos(q1) + reacher::kLink2 * std::cos(q1 + q2),
          reacher::kLink1 * std::sin(q1) + reacher::kLink2 * std::sin(q1 + q2)};
}

Point2 elbow_position(double q1) { return {reacher::kLink1 * std::cos(q1), reacher::kLink1 * std::sin(q1)}; }

EnvState reset(TaskId task, std::uint64_t seed) {
  num::Rng rng(num::mix_seed(seed, static_cast<std::uint64_t>(task)));
  switch (task) {
    case TaskId::Pendulum:
      return reset_pendulum(rng);
    case TaskId::Reacher:
      return reset_reacher(rng);
    case TaskId::Pusher:
      return reset_pusher(rng);
    case TaskId::FetchReach:
      return reset_fetch(rng);
  }
  throw std::invalid_argument("reset: unknown task");
}

EnvState transition(const EnvState& state, std::span<const double> action) {
  const auto a = clamped_action(task_of(state), action);
  return std::visit(
      Overloaded{[&](const PendulumState& s) -> EnvState { return advance_pendulum(s, a[0]); },
                 [&](const ReacherState& s) -> EnvState { return advance_reacher(s, a); },
                 [&](const PusherState& s) -> EnvState { return advance_pusher(s, a); },
                 [&](const FetchState& s) -> EnvState { return advance_fetch(s, a); }},
      state);
}

double goal_distance(const EnvState& state) {
  return std::visit(Overloaded{[](const PendulumState& s) { return std::abs(s.phi); },
                               [](const ReacherState& s) {
                                 const Point2 tip = forward_kinematics(s.q1, s.q2);
                                 return std::hypot(tip.x - s.target_x, tip.y - s.target_y);
                               },
                               [](const PusherState& s) {
                                 return std::hypot(s.object_x - s.target_x, s.object_y - s.target_y);
                               },
                               [](const FetchState& s) {
                                 return hypot3(s.gripper_x - s.target_x, s.gripper_y - s.target_y,
                                               s.gripper_z - s.target_z);
                               }},
                    state);
}

bool is_success(const EnvState& state) {
  const double d = goal_distance(state);
  switch (task_of(state)) {
    case TaskId::Pendulum:
      return d < pendulum::kSuccessTilt;
    case TaskId::Reacher:
      return d < reacher::kSuccessDistance;
    case TaskId::Pusher:
      return d < pusher::kSuccessDistance;
    case TaskId::FetchReach:
      return d < fetch::kSuccessDistance;
  }
  return false;
}

double oracle_dense(const EnvState& state) { return -goal_distance(state); }

double oracle_sparse(const EnvState& state) { return is_success(state) ? 0.0 : -1.0; }

std::vector<double> observe(const EnvState& state) {
  return std::visit(
      Overloaded{
          [](const PendulumState& s) {
            return std::vector<double>{std::cos(s.phi), std::sin(s.phi), s.omega / pendulum::kMaxSpeed};
          },
          [](const ReacherState& s) {
            const double k = 1.0 / (reacher::kLink1 + reacher::kLink2);
            const Point2 tip = forward_kinematics(s.q1, s.q2);
            return std::vector<double>{std::cos(s.q1),      std::sin(s.q1),     std::cos(s.q2),
                                       std::sin(s.q2),      s.target_x * k,     s.target_y * k,
                                       (tip.x - s.target_x) * k * 4.0, (tip.y - s.target_y) * k * 4.0};
          },
          [](const PusherState& s) {
            const double k = 1.0 / pusher::kHalfExtent;
            return std::vector<double>{s.effector_x * k,
                                       s.effector_y * k,
                                       s.object_x * k,
                                       s.object_y * k,
                                       s.target_x * k,
                                       s.target_y * k,
                                       (s.object_x - s.effector_x) * k,
                                       (s.object_y - s.effector_y) * k,
                                       (s.target_x - s.object_x) * k * 4.0,
                                       (s.target_y - s.object_y) * k * 4.0};
          },
          [](const FetchState& s) {
            const double k = 1.0 / fetch::kHalfExtent;
            return std::vector<double>{s.gripper_x * k,
                                       s.gripper_y * k,
                                       s.gripper_z * k,
                                       s.target_x * k,
                                       s.target_y * k,
                                       s.target_z * k,
                                       (s.target_x - s.gripper_x) * k * 4.0,
                                       (s.target_y - s.gripper_y) * k * 4.0,
                                       (s.target_z - s.gripper_z) * k * 4.0};
          }},
      state);
}

std::vector<double> to_vector(const EnvState& state) {
  return std::visit(
      Overloaded{[](const PendulumState& s) { return std::vector<double>{s.phi, s.omega}; },
                 [](const ReacherState& s) { return std::vector<double>{s.q1, s.q2, s.target_x, s.target_y}; },
                 [](const PusherState& s) {
                   return std::vector<double>{s.effector_x, s.effector_y, s.object_x,
                                              s.object_y,   s.target_x,   s.target_y};
                 },
                 [](const FetchState& s) {
                   return std::vector<double>{s.gripper_x, s.gripper_y, s.gripper_z,
                                              s.target_x,  s.target_y,  s.target_z};
                 }},
      state);
}

EnvState from_vector(TaskId task, std::span<const double> v) {
  if (v.size() != state_dim(task)) {
    throw std::invalid_argument(std::string(task_name(task)) + ": state vector of length " +
                                std::to_string(v.size()) + ", expected " + std::to_string(state_dim(task)));
  }
  switch (task) {
    case TaskId::Pendulum:
      return PendulumState{v[0], v[1]};
    case TaskId::Reacher:
      return ReacherState{v[0], v[1], v[2], v[3]};
    case TaskId::Pusher:
      return PusherState{v[0], v[1], v[2], v[3], v[4], v[5]};
    case TaskId::FetchReach:
      return FetchState{v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  throw std::invalid_argument("from_vector: unknown task");
}

StepResult step(const EnvState& state, std::span<const double> action, EpisodeClock clock,
                const StepOptions& options) {
  StepResult r;
  r.state = transition(state, action);
  r.clock.steps = clock.steps + 1;
  r.clock.success_streak = is_success(r.state) ? clock.success_streak + 1 : 0;
  r.steps_elapsed = r.clock.steps;
  r.success_hold = options.success_hold > 0 && r.clock.success_streak >= options.success_hold;
  r.truncated = !r.success_hold && r.clock.steps >= options.max_steps;
  r.terminated = r.success_hold || r.truncated;
  return r;
}

Environment::Environment(TaskId task, std::uint64_t seed, StepOptions options)
    : task_(task), options_(options), state_(reset(task, seed)) {}

StepResult Environment::step(std::span<const double> action) {
  if (done_) throw std::logic_error("Environment::step called after the episode terminated");
  StepResult r = envs::step(state_, action, clock_, options_);
  state_ = r.state;
  clock_ = r.clock;
  done_ = r.terminated;
  return r;
}

}  // namespace rwl::envs
