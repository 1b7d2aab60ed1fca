#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rwl::envs {

enum class TaskId { Pendulum, Reacher, Pusher, FetchReach };
inline constexpr std::array<TaskId, 4> kAllTasks = {TaskId::Pendulum, TaskId::Reacher, TaskId::Pusher,
                                                    TaskId::FetchReach};

std::string_view task_name(TaskId task);
// Accepts "pendulum", "reacher", "pusher", "fetch" / "fetchreach" (any case).
TaskId parse_task(std::string_view name);

inline constexpr int kMaxEpisodeSteps = 100;
inline constexpr int kSuccessHoldSteps = 5;
inline constexpr double kDt = 0.05;

namespace pendulum {
inline constexpr double kGravity = 10.0;
inline constexpr double kMass = 1.0;
inline constexpr double kLength = 1.0;
inline constexpr double kMaxTorque = 2.0;
inline constexpr double kMaxSpeed = 8.0;
inline constexpr double kSuccessTilt = 0.15;
}  // namespace pendulum

namespace reacher {
inline constexpr double kLink1 = 0.10;
inline constexpr double kLink2 = 0.11;
inline constexpr double kMaxJointStep = 0.5;  // rad per step at |action| = 1
inline constexpr double kTargetMinRadius = 0.05;
inline constexpr double kTargetMaxRadius = 0.20;
inline constexpr double kSuccessDistance = 0.01;
}  // namespace reacher

namespace pusher {
inline constexpr double kHalfExtent = 0.3;  // square workspace [-h, h]^2
inline constexpr double kEffectorRadius = 0.02;
inline constexpr double kObjectRadius = 0.03;
inline constexpr double kMaxStep = 0.02;  // m per step at |action| = 1
inline constexpr double kTargetX = 0.0;
inline constexpr double kTargetY = 0.15;
inline constexpr double kSuccessDistance = 0.01;
}  // namespace pusher

namespace fetch {
inline constexpr double kHalfExtent = 0.15;  // cube workspace [-h, h]^3
inline constexpr double kMaxStep = 0.05;
inline constexpr double kSuccessDistance = 0.01;
}  // namespace fetch

struct PendulumState {
  double phi = 0.0;    // tilt from upright, (-pi, pi]
  double omega = 0.0;  // rad/s
};

struct ReacherState {
  double q1 = 0.0, q2 = 0.0;
  double target_x = 0.0, target_y = 0.0;
};

struct PusherState {
  double effector_x = 0.0, effector_y = 0.0;
  double object_x = 0.0, object_y = 0.0;
  double target_x = pusher::kTargetX, target_y = pusher::kTargetY;
};

struct FetchState {
  double gripper_x = 0.0, gripper_y = 0.0, gripper_z = 0.0;
  double target_x = 0.0, target_y = 0.0, target_z = 0.0;
};

using EnvState = std::variant<PendulumState, ReacherState, PusherState, FetchState>;

class InvalidActionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

TaskId task_of(const EnvState& state);
std::size_t action_dim(TaskId task);
std::size_t observation_dim(TaskId task);
std::size_t state_dim(TaskId task);

// Wraps into (-pi, pi].
double wrap_angle(double a);

struct Point2 {
  double x = 0.0, y = 0.0;
};
Point2 forward_kinematics(double q1, double q2);
// Elbow position of the two-link arm.
Point2 elbow_position(double q1);

// Deterministic function of (task, seed).
EnvState reset(TaskId task, std::uint64_t seed);

// Pure one-tick dynamics. Action components are clamped to [-1, 1] then
// scaled per task; non-finite or wrongly sized actions throw.
EnvState transition(const EnvState& state, std::span<const double> action);

// |phi| for Pendulum; Euclidean goal distance D for the others.
double goal_distance(const EnvState& state);
bool is_success(const EnvState& state);
double oracle_dense(const EnvState& state);
double oracle_sparse(const EnvState& state);

// Proprioceptive observation consumed by the agents.
std::vector<double> observe(const EnvState& state);

std::vector<double> to_vector(const EnvState& state);
EnvState from_vector(TaskId task, std::span<const double> values);

struct EpisodeClock {
  int steps = 0;
  int success_streak = 0;
};

struct StepOptions {
  int success_hold = kSuccessHoldSteps;
  int max_steps = kMaxEpisodeSteps;
};

struct StepResult {
  EnvState state;
  bool terminated = false;    // either success-hold or the step cap
  bool success_hold = false;  // success predicate held for `success_hold` consecutive steps
  bool truncated = false;     // step cap reached without success-hold
  int steps_elapsed = 0;
  EpisodeClock clock;
};

StepResult step(const EnvState& state, std::span<const double> action, EpisodeClock clock,
                const StepOptions& options = {});

// Stateful wrapper owning one episode.
class Environment {
 public:
  Environment(TaskId task, std::uint64_t seed, StepOptions options = {});

  TaskId task() const { return task_; }
  const EnvState& state() const { return state_; }
  const EpisodeClock& clock() const { return clock_; }
  bool done() const { return done_; }
  const StepOptions& options() const { return options_; }

  StepResult step(std::span<const double> action);

 private:
  TaskId task_;
  StepOptions options_;
  EnvState state_;
  EpisodeClock clock_;
  bool done_ = false;
};

}  // namespace rwl::envs
