#include <doctest.h>

#include <cmath>

#include "rwl/rewards/rewards.hpp"
#include "support/states.hpp"

using namespace rwl;
using namespace rwl::rewards;
using envs::TaskId;

TEST_CASE("visual reward formulas on the probability grid") {
  const double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  const double dense[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  const double sparse[] = {-1.0, -1.0, 0.0, 0.0, 0.0};
  for (int i = 0; i < 5; ++i) {
    CHECK(visual_dense(grid[i]) == dense[i]);
    CHECK(visual_sparse(grid[i]) == sparse[i]);
    CHECK(from_probability(RewardKind::VisualDense, grid[i]) == dense[i]);
    CHECK(from_probability(RewardKind::VisualSparse, grid[i]) == sparse[i]);
  }
  CHECK(visual_sparse(std::nextafter(0.5, 0.0)) == -1.0);
  CHECK_THROWS_AS(from_probability(RewardKind::Dense, 0.5), RewardError);
}

TEST_CASE("visual rewards share the 0.5 cut and preserve order") {
  rwl::num::Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform(), q = rng.uniform();
    CHECK((visual_sparse(p) == 0.0) == (visual_dense(p) >= 0.0));
    if (p < q) CHECK(visual_dense(p) < visual_dense(q));
    CHECK(visual_dense(p) >= -1.0);
    CHECK(visual_dense(p) <= 1.0);
  }
}

TEST_CASE("oracle providers delegate to the environment") {
  rwl::num::Rng rng(77);
  for (TaskId t : envs::kAllTasks) {
    RewardProvider dense(RewardKind::Dense, t), sparse(RewardKind::Sparse, t);
    for (int i = 0; i < 10000; ++i) {
      const auto s = rwl::testing::sample_state(t, rng);
      const double rs = sparse.reward(s);
      CHECK((rs == 0.0) == envs::is_success(s));
      CHECK((rs == 0.0 || rs == -1.0));
      const double rd = dense.reward(s);
      CHECK(rd == envs::oracle_dense(s));
      CHECK(rd <= 0.0);
      // A perfect classifier turns the visual sparse reward into the oracle one.
      CHECK(visual_sparse(envs::is_success(s) ? 1.0 : 0.0) == rs);
    }
    CHECK(sparse.latency_stats().calls == 10000);
  }
}

TEST_CASE("visual providers need a classifier and a frame") {
  CHECK_THROWS_AS(RewardProvider(RewardKind::VisualDense, TaskId::Pendulum), RewardError);
  auto model = std::make_shared<clf::ClassifierModel>(clf::ClassifierModel::build(clf::Architecture{}, 1));
  CHECK_THROWS_AS(RewardProvider(RewardKind::VisualSparse, TaskId::Pendulum, model, {96, false}), RewardError);

  RewardProvider vd(RewardKind::VisualDense, TaskId::Pendulum, model);
  RewardProvider vs(RewardKind::VisualSparse, TaskId::Pendulum, model);
  const auto s = envs::reset(TaskId::Pendulum, 3);
  CHECK_THROWS_AS(vd.reward(s, nullptr), RewardError);
  const auto frame = render::render(s);
  const double p = model->predict(frame).p_success;
  CHECK(vd.reward(s, &frame) == 2.0 * p - 1.0);
  CHECK(vs.reward(s, &frame) == (p >= 0.5 ? 0.0 : -1.0));
  // Rendering inside the provider uses the same frame.
  CHECK(vd.reward(s) == 2.0 * p - 1.0);
  CHECK_THROWS_AS(vd.reward(envs::reset(TaskId::Reacher, 1), &frame), RewardError);
}

TEST_CASE("latency statistics") {
  RewardProvider oracle(RewardKind::Dense, TaskId::FetchReach);
  CHECK_THROWS_AS(oracle.latency_stats(), std::logic_error);
  for (int i = 0; i < 200; ++i) oracle.reward(envs::reset(TaskId::FetchReach, i));
  const auto os = oracle.latency_stats();
  CHECK(os.calls == 200);
  CHECK(os.mean_ms < 0.1);
  CHECK(os.max_ms >= os.mean_ms);

  auto model = std::make_shared<clf::ClassifierModel>(clf::ClassifierModel::build(clf::Architecture{}, 2));
  RewardProvider visual(RewardKind::VisualDense, TaskId::FetchReach, model);
  for (int i = 0; i < 5; ++i) visual.reward(envs::reset(TaskId::FetchReach, i));
  CHECK(visual.latency_stats().mean_ms > os.mean_ms);

  visual.reset_latency();
  CHECK_THROWS_AS(visual.latency_stats(), std::logic_error);
}

TEST_CASE("reward kinds parse") {
  for (auto k : {RewardKind::Dense, RewardKind::Sparse, RewardKind::VisualDense, RewardKind::VisualSparse})
    CHECK(parse_reward_kind(to_string(k)) == k);
  CHECK(parse_reward_kind("Visual_Dense") == RewardKind::VisualDense);
  CHECK_THROWS_AS(parse_reward_kind("shaped"), RewardError);
}
