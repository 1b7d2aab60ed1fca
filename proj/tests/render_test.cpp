#include <doctest.h>

#include <numbers>

#include "rwl/demos/expert.hpp"
#include "rwl/numerics/rng.hpp"
#include "rwl/render/render.hpp"

using namespace rwl::envs;
using namespace rwl::render;

namespace {

std::size_t count_color(const Image& img, Rgb c) {
  std::size_t n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) n += img.at(x, y) == c;
  return n;
}

// All states visited by the expert on one seed.
std::vector<EnvState> expert_trajectory(TaskId t, std::uint64_t seed) {
  Environment env(t, seed);
  std::vector<EnvState> out{env.state()};
  StepResult r;
  do {
    r = env.step(rwl::demos::scripted_expert(env.state()));
    out.push_back(r.state);
  } while (!r.terminated);
  return out;
}

}  // namespace

TEST_CASE("render is deterministic and sized by the config") {
  for (TaskId t : kAllTasks) {
    for (int res : {64, 96, 160}) {
      const EnvState s = reset(t, 3);
      const Image a = render(s, {res, false});
      const Image b = render(s, {res, false});
      CHECK(a == b);
      CHECK(a.width == res);
      CHECK(a.height == res);
      CHECK(a.pixels.size() == static_cast<std::size_t>(3 * res * res));
    }
  }
  CHECK_THROWS_AS(render(reset(TaskId::Pendulum, 1), {65, false}), std::invalid_argument);
}

TEST_CASE("reacher targets 5 cm apart render differently") {
  rwl::num::Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    auto s = std::get<ReacherState>(reset(TaskId::Reacher, 1000 + i));
    auto moved = s;
    const double ang = rng.uniform(0.0, 2 * std::numbers::pi);
    moved.target_x += 0.05 * std::cos(ang);
    moved.target_y += 0.05 * std::sin(ang);
    CHECK_FALSE(render(s) == render(moved));
  }
}

TEST_CASE("upright and hanging pendulum rods occupy opposite half-planes") {
  const Image up = render(PendulumState{0.0, 0.0});
  const Image down = render(PendulumState{std::numbers::pi, 0.0});
  const int mid = up.height / 2;
  std::size_t up_pixels = 0, down_pixels = 0;
  for (int y = 0; y < up.height; ++y) {
    for (int x = 0; x < up.width; ++x) {
      if (up.at(x, y) == palette::kPendulumRod) {
        CHECK(y < mid);
        ++up_pixels;
      }
      if (down.at(x, y) == palette::kPendulumRod) {
        CHECK(y >= mid);
        ++down_pixels;
      }
    }
  }
  CHECK(up_pixels > 20);
  CHECK(down_pixels > 20);
}

Rgb mean(Rgb a, Rgb b) {
  return {static_cast<std::uint8_t>((a.r + b.r) / 2), static_cast<std::uint8_t>((a.g + b.g) / 2),
          static_cast<std::uint8_t>((a.b + b.b) / 2)};
}

TEST_CASE("palette carries the task colours") {
  const Image r = render(reset(TaskId::Reacher, 4));
  // An unoccluded target is translucent over what lies beneath.
  CHECK(count_color(r, palette::kTarget) == 0);
  CHECK(count_color(r, mean(palette::kTarget, palette::kBackground)) > 0);
  CHECK(count_color(r, palette::kFingertip) > 0);
  CHECK(count_color(render(reset(TaskId::Reacher, 4), {kDefaultResolution, true}), palette::kTarget) > 0);
  const Image p = render(reset(TaskId::Pusher, 4));
  CHECK(count_color(p, palette::kObject) > 0);
  CHECK(count_color(p, mean(palette::kTarget, palette::kTable)) > 0);
}

TEST_CASE("a target under the fingertip blends with it") {
  ReacherState s = std::get<ReacherState>(reset(TaskId::Reacher, 9));
  const Point2 tip = forward_kinematics(s.q1, s.q2);
  s.target_x = tip.x;
  s.target_y = tip.y;
  const Image img = render(EnvState{s});
  CHECK(count_color(img, mean(palette::kTarget, palette::kFingertip)) >= 4);
}

TEST_CASE("success changes are visible with occlusion off") {
  for (TaskId t : kAllTasks) {
    std::size_t pairs = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto traj = expert_trajectory(t, seed);
      for (std::size_t i = 0; i < traj.size(); ++i) {
        for (std::size_t j = i + 1; j < traj.size(); j += 3) {
          if (is_success(traj[i]) == is_success(traj[j])) continue;
          ++pairs;
          CHECK_FALSE(render(traj[i]) == render(traj[j]));
        }
      }
    }
    INFO(task_name(t));
    CHECK(pairs > 0);
  }
}

TEST_CASE("occlusion can hide the goal while success differs") {
  // Target under the fingertip (success) vs under the middle of the forearm (failure).
  ReacherState on_tip{0.4, 0.0, 0.0, 0.0};
  const Point2 tip = forward_kinematics(on_tip.q1, on_tip.q2);
  on_tip.target_x = tip.x;
  on_tip.target_y = tip.y;
  ReacherState under_arm = on_tip;
  under_arm.target_x = 0.155 * std::cos(0.4);
  under_arm.target_y = 0.155 * std::sin(0.4);
  REQUIRE(is_success(on_tip));
  REQUIRE_FALSE(is_success(under_arm));
  CHECK(render(on_tip, {64, true}) == render(under_arm, {64, true}));
  CHECK_FALSE(render(on_tip, {64, false}) == render(under_arm, {64, false}));
}

TEST_CASE("png round trip") {
  rwl::num::Rng rng(1);
  for (int res : {64, 96, 160}) {
    Image img(res, res);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
    const auto bytes = encode_png(img);
    CHECK(decode_png(bytes) == img);
  }
  const auto black = encode_png(Image(64, 64));
  const unsigned char sig[] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  REQUIRE(black.size() > 8);
  for (int i = 0; i < 8; ++i) CHECK(black[i] == sig[i]);
  const Image decoded = decode_png(black);
  CHECK(decoded.pixels.size() == 12288);
  for (auto p : decoded.pixels) CHECK(p == 0);

  std::vector<std::uint8_t> junk(black.begin(), black.begin() + 20);
  CHECK_THROWS_AS(decode_png(junk), PngError);
}
