#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rwl/demos/expert.hpp"
#include "rwl/envs/envs.hpp"
#include "rwl/numerics/rng.hpp"
#include "support/states.hpp"

using namespace rwl::envs;
using rwl::demos::scripted_expert;

namespace {

constexpr double kPi = std::numbers::pi;

double independent_distance(const EnvState& state) {
  const auto v = to_vector(state);
  switch (task_of(state)) {
    case TaskId::Pendulum:
      return std::fabs(v[0]);
    case TaskId::Reacher: {
      const double x = 0.10 * std::cos(v[0]) + 0.11 * std::cos(v[0] + v[1]);
      const double y = 0.10 * std::sin(v[0]) + 0.11 * std::sin(v[0] + v[1]);
      return std::sqrt((x - v[2]) * (x - v[2]) + (y - v[3]) * (y - v[3]));
    }
    case TaskId::Pusher:
      return std::sqrt((v[2] - v[4]) * (v[2] - v[4]) + (v[3] - v[5]) * (v[3] - v[5]));
    case TaskId::FetchReach: {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += (v[i] - v[i + 3]) * (v[i] - v[i + 3]);
      return std::sqrt(s);
    }
  }
  return 0.0;
}

bool states_equal(const EnvState& a, const EnvState& b) { return a.index() == b.index() && to_vector(a) == to_vector(b); }

}  // namespace

TEST_CASE("task names round trip") {
  for (TaskId t : kAllTasks) CHECK(parse_task(task_name(t)) == t);
  CHECK(parse_task("FetchReach") == TaskId::FetchReach);
  CHECK_THROWS_AS(parse_task("cartpole"), std::invalid_argument);
}

TEST_CASE("reset is a deterministic function of the seed") {
  for (TaskId t : kAllTasks) {
    CHECK(states_equal(reset(t, 42), reset(t, 42)));
    CHECK_FALSE(states_equal(reset(t, 42), reset(t, 43)));
    CHECK(task_of(reset(t, 1)) == t);
  }
}

TEST_CASE("pendulum resets cover the full circle") {
  double lo = 10.0, hi = -10.0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const auto s = std::get<PendulumState>(reset(TaskId::Pendulum, seed));
    CHECK(s.phi > -kPi);
    CHECK(s.phi <= kPi);
    CHECK(std::abs(s.omega) <= 1.0);
    lo = std::min(lo, s.phi);
    hi = std::max(hi, s.phi);
  }
  CHECK(lo < -kPi + 0.1);
  CHECK(hi > kPi - 0.1);
}

TEST_CASE("reset states respect workspace bounds") {
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const auto r = std::get<ReacherState>(reset(TaskId::Reacher, seed));
    const double d = std::hypot(r.target_x, r.target_y);
    CHECK(d >= 0.05);
    CHECK(d <= 0.21);
    CHECK_FALSE(is_success(r));

    const auto p = std::get<PusherState>(reset(TaskId::Pusher, seed));
    CHECK(std::hypot(p.object_x - p.effector_x, p.object_y - p.effector_y) >=
          pusher::kEffectorRadius + pusher::kObjectRadius);
    CHECK(std::abs(p.object_x) <= pusher::kHalfExtent);
    CHECK(std::abs(p.object_y) <= pusher::kHalfExtent);
    CHECK_FALSE(is_success(p));

    const auto f = std::get<FetchState>(reset(TaskId::FetchReach, seed));
    for (double v : to_vector(f)) CHECK(std::abs(v) <= fetch::kHalfExtent);
    CHECK_FALSE(is_success(f));
  }
}

TEST_CASE("pendulum dynamics") {
  const double zero[] = {0.0};
  SUBCASE("upright equilibrium is preserved under zero torque") {
    const auto n = std::get<PendulumState>(transition(PendulumState{0.0, 0.0}, zero));
    CHECK(n.phi == 0.0);
    CHECK(n.omega == 0.0);
  }
  SUBCASE("hanging equilibrium, one semi-implicit Euler step") {
    const auto n = std::get<PendulumState>(transition(PendulumState{kPi, 0.0}, zero));
    CHECK(n.omega == doctest::Approx(0.05 * 15.0 * std::sin(kPi)).epsilon(1e-12));
    CHECK(std::abs(n.omega) < 1e-12);
    CHECK(std::abs(wrap_angle(n.phi - kPi)) < 1e-12);
  }
  SUBCASE("hand-integrated step with torque") {
    const double a[] = {0.5};
    const auto n = std::get<PendulumState>(transition(PendulumState{0.3, 1.0}, a));
    const double omega = 1.0 + (15.0 * std::sin(0.3) + 3.0 * 1.0) * 0.05;
    CHECK(n.omega == doctest::Approx(omega).epsilon(1e-12));
    CHECK(n.phi == doctest::Approx(0.3 + omega * 0.05).epsilon(1e-12));
  }
  SUBCASE("speed is clipped and actions are clamped") {
    const double big[] = {50.0};
    const double one[] = {1.0};
    CHECK(std::get<PendulumState>(transition(PendulumState{0.2, 7.99}, big)).omega == 8.0);
    CHECK(to_vector(transition(PendulumState{0.2, 1.0}, big)) == to_vector(transition(PendulumState{0.2, 1.0}, one)));
  }
}

TEST_CASE("fetch kinematics") {
  const double a[] = {1.0, 0.0, 0.0};
  const auto n = std::get<FetchState>(transition(FetchState{}, a));
  CHECK(n.gripper_x == doctest::Approx(0.05));
  CHECK(n.gripper_y == 0.0);
  CHECK(n.gripper_z == 0.0);
  const auto edge = std::get<FetchState>(transition(FetchState{0.14, 0, 0, 0, 0, 0}, a));
  CHECK(edge.gripper_x == fetch::kHalfExtent);
}

TEST_CASE("pusher contact keeps the disks apart") {
  rwl::num::Rng rng(5);
  const double contact = pusher::kEffectorRadius + pusher::kObjectRadius;
  for (int i = 0; i < 2000; ++i) {
    PusherState s;
    s.object_x = rng.uniform(-0.2, 0.2);
    s.object_y = rng.uniform(-0.2, 0.2);
    const double ang = rng.uniform(0.0, 2 * kPi);
    s.effector_x = s.object_x + (contact + rng.uniform(0.0, 0.02)) * std::cos(ang);
    s.effector_y = s.object_y + (contact + rng.uniform(0.0, 0.02)) * std::sin(ang);
    const double act[] = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    const auto n = std::get<PusherState>(transition(s, act));
    CHECK(std::hypot(n.object_x - n.effector_x, n.object_y - n.effector_y) >= contact - 1e-9);
  }
  SUBCASE("head-on push moves the object by the penetration depth") {
    PusherState s;
    s.effector_x = 0.0;
    s.effector_y = -0.05;
    s.object_x = 0.0;
    s.object_y = 0.0;
    const double up[] = {0.0, 1.0};
    const auto n = std::get<PusherState>(transition(s, up));
    CHECK(n.effector_y == doctest::Approx(-0.03));
    CHECK(n.object_x == doctest::Approx(0.0));
    CHECK(n.object_y == doctest::Approx(0.02));
  }
  SUBCASE("no contact leaves the object in place") {
    PusherState s;
    s.effector_y = -0.2;
    const double right[] = {1.0, 0.0};
    const auto n = std::get<PusherState>(transition(s, right));
    CHECK(n.object_x == s.object_x);
    CHECK(n.object_y == s.object_y);
  }
}

TEST_CASE("forward kinematics") {
  auto tip = forward_kinematics(0.0, 0.0);
  CHECK(tip.x == doctest::Approx(0.21));
  CHECK(tip.y == doctest::Approx(0.0));
  tip = forward_kinematics(kPi / 2, 0.0);
  CHECK(std::abs(tip.x) < 1e-12);
  CHECK(tip.y == doctest::Approx(0.21));
  tip = forward_kinematics(kPi / 4, kPi / 4);
  CHECK(std::abs(tip.x - (0.10 * std::cos(kPi / 4) + 0.11 * std::cos(kPi / 2))) < 1e-12);
  CHECK(std::abs(tip.y - (0.10 * std::sin(kPi / 4) + 0.11 * std::sin(kPi / 2))) < 1e-12);
}

TEST_CASE("oracle rewards and the success predicate") {
  CHECK(oracle_dense(PendulumState{0.0, 0.0}) == 0.0);
  CHECK(oracle_dense(PendulumState{kPi / 2, 0.0}) == doctest::Approx(-1.5708).epsilon(1e-4));
  CHECK(oracle_sparse(PendulumState{0.10, 0.0}) == 0.0);
  CHECK(oracle_sparse(PendulumState{-0.20, 0.0}) == -1.0);
  CHECK(is_success(PendulumState{0.149, 0.0}));
  CHECK_FALSE(is_success(PendulumState{0.15, 0.0}));

  // Straight arm puts the fingertip at (0.21, 0).
  CHECK(oracle_dense(ReacherState{0.0, 0.0, 0.21, 0.05}) == doctest::Approx(-0.05).epsilon(1e-12));
  CHECK(oracle_sparse(ReacherState{0.0, 0.0, 0.21, 0.005}) == 0.0);

  CHECK_FALSE(is_success(FetchState{0.0, 0.0, 0.0, 0.01, 0.0, 0.0}));
  CHECK(is_success(FetchState{0.0, 0.0, 0.0, 0.0099, 0.0, 0.0}));
  PusherState p;
  p.object_x = p.target_x;
  p.object_y = p.target_y;
  CHECK(is_success(p));
  CHECK(oracle_dense(p) == 0.0);
}

TEST_CASE("oracle properties over sampled states") {
  rwl::num::Rng rng(2024);
  for (TaskId t : kAllTasks) {
    int positives = 0;
    for (int i = 0; i < 10000; ++i) {
      const EnvState s = rwl::testing::sample_state(t, rng);
      const bool ok = is_success(s);
      positives += ok;
      CHECK((oracle_sparse(s) == 0.0) == ok);
      CHECK((oracle_sparse(s) == -1.0) == !ok);
      const double dense = oracle_dense(s);
      CHECK(dense <= 0.0);
      CHECK(std::abs(-dense - independent_distance(s)) < 1e-12);
    }
    CHECK(positives > 0);
  }
}

TEST_CASE("invalid actions are rejected") {
  for (TaskId t : kAllTasks) {
    const EnvState s = reset(t, 1);
    std::vector<double> a(action_dim(t), 0.0);
    a.back() = std::nan("");
    CHECK_THROWS_AS(transition(s, a), InvalidActionError);
    a.back() = INFINITY;
    CHECK_THROWS_AS(transition(s, a), InvalidActionError);
    std::vector<double> wrong(action_dim(t) + 1, 0.0);
    CHECK_THROWS_AS(transition(s, wrong), InvalidActionError);
  }
}

TEST_CASE("episodes are capped and angles stay wrapped") {
  rwl::num::Rng rng(9);
  for (TaskId t : kAllTasks) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Environment env(t, seed);
      StepResult r;
      std::vector<double> a(action_dim(t));
      do {
        for (double& v : a) v = rng.uniform(-1.0, 1.0);
        r = env.step(a);
        CHECK(r.steps_elapsed <= kMaxEpisodeSteps);
        if (const auto* p = std::get_if<PendulumState>(&r.state)) {
          CHECK(p->phi > -kPi);
          CHECK(p->phi <= kPi);
        }
        if (const auto* q = std::get_if<ReacherState>(&r.state)) {
          CHECK(std::abs(q->q1) <= kPi);
          CHECK(std::abs(q->q2) <= kPi);
        }
      } while (!r.terminated);
      CHECK(env.done());
      CHECK_THROWS_AS(env.step(a), std::logic_error);
    }
  }
}

TEST_CASE("step is deterministic and success-hold needs K consecutive steps") {
  const double zero[] = {0.0};
  EpisodeClock clock;
  EnvState s = PendulumState{0.0, 0.0};
  for (int k = 1; k <= kSuccessHoldSteps; ++k) {
    const StepResult a = step(s, zero, clock);
    const StepResult b = step(s, zero, clock);
    CHECK(states_equal(a.state, b.state));
    CHECK(a.clock.success_streak == k);
    CHECK(a.terminated == (k == kSuccessHoldSteps));
    CHECK(a.success_hold == (k == kSuccessHoldSteps));
    s = a.state;
    clock = a.clock;
  }
  SUBCASE("a failing step resets the streak") {
    const StepResult r = step(PendulumState{1.0, 0.0}, zero, EpisodeClock{3, 4});
    CHECK(r.clock.success_streak == 0);
    CHECK_FALSE(r.terminated);
  }
  SUBCASE("step cap truncates") {
    const StepResult r = step(PendulumState{2.0, 0.0}, zero, EpisodeClock{99, 0});
    CHECK(r.truncated);
    CHECK(r.terminated);
    CHECK_FALSE(r.success_hold);
    CHECK(r.steps_elapsed == 100);
  }
  SUBCASE("hold is configurable") {
    const StepResult r = step(PendulumState{0.0, 0.0}, zero, EpisodeClock{}, StepOptions{1, 100});
    CHECK(r.success_hold);
  }
}

TEST_CASE("state vectors round trip") {
  for (TaskId t : kAllTasks) {
    const EnvState s = reset(t, 77);
    CHECK(states_equal(from_vector(t, to_vector(s)), s));
    CHECK(to_vector(s).size() == state_dim(t));
    CHECK(observe(s).size() == observation_dim(t));
  }
  const double bad[] = {1.0};
  CHECK_THROWS_AS(from_vector(TaskId::Reacher, bad), std::invalid_argument);
}

TEST_CASE("scripted expert signs") {
  const auto a = scripted_expert(PendulumState{0.01, 0.0});
  CHECK(a[0] < 0.0);
  const auto b = scripted_expert(PendulumState{-0.01, 0.0});
  CHECK(b[0] > 0.0);
  const auto f = scripted_expert(FetchState{0.0, 0.0, 0.0, 0.1, 0.0, 0.0});
  CHECK(f[0] > 0.0);
  CHECK(f[1] == 0.0);
  CHECK(f[2] == 0.0);
}

TEST_CASE("scripted experts succeed within the episode cap") {
  for (TaskId t : kAllTasks) {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Environment env(t, seed);
      StepResult r;
      do {
        const auto a = scripted_expert(env.state());
        for (double v : a) CHECK(std::abs(v) <= 1.0);
        r = env.step(a);
      } while (!r.terminated);
      ok += r.success_hold;
    }
    INFO(task_name(t));
    CHECK(ok >= 95);
  }
}
