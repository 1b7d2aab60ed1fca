#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "rwl/classifier/classifier.hpp"
#include "rwl/demos/expert.hpp"
#include "rwl/experiments/report.hpp"
#include "rwl/experiments/stats.hpp"
#include "support/tempdir.hpp"

using namespace rwl;
using namespace rwl::exp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Rank of |d_i| straight from the definition: one plus the smaller ones plus
// half the equal others.
std::vector<double> definition_ranks(const std::vector<double>& m) {
  std::vector<double> r(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (m[j] < m[i]) less += 1.0;
      if (j != i && m[j] == m[i]) equal += 1.0;
    }
    r[i] = 1.0 + less + 0.5 * equal;
  }
  return r;
}

// p values by listing every sign assignment.
std::pair<double, double> enumerate_p(const std::vector<double>& diffs) {
  std::vector<double> m;
  for (double d : diffs) m.push_back(std::abs(d));
  const auto r = definition_ranks(m);
  double w = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i) w += diffs[i] > 0 ? r[i] : 0.0;
  const std::size_t n = diffs.size();
  double ge = 0.0, le = 0.0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) s += r[i];
    }
    ge += s >= w - 1e-9 ? 1.0 : 0.0;
    le += s <= w + 1e-9 ? 1.0 : 0.0;
  }
  const double all = static_cast<double>(1ULL << n);
  return {ge / all, std::min(1.0, 2.0 * std::min(ge, le) / all)};
}

std::vector<std::pair<double, double>> from_diffs(const std::vector<double>& d) {
  std::vector<std::pair<double, double>> p;
  for (double x : d) p.emplace_back(x, 0.0);
  return p;
}

std::vector<Table3Row> reference_table3() { return read_table3_csv(fs::path(RWL_SOURCE_DIR) / "data/reference_table3.csv"); }

RunConfig tiny_run(std::uint64_t seed = 1) {
  RunConfig c;
  c.task = envs::TaskId::Pendulum;
  c.agent.algorithm = agents::Algorithm::SAC;
  c.agent.hidden = {16, 16};
  c.agent.batch_size = 16;
  c.agent.warmup_steps = 100;
  c.seed = seed;
  c.total_steps = 600;
  c.eval_interval = 250;
  c.eval_episodes = 4;
  c.curve_episodes = 2;
  return c;
}

}  // namespace

TEST_CASE("wilcoxon signed rank") {
  SUBCASE("degenerate inputs") {
    const std::vector<std::pair<double, double>> same(8, {0.5, 0.5});
    CHECK_THROWS_AS(wilcoxon_signed_rank(same), StatsError);
    CHECK_THROWS_AS(wilcoxon_signed_rank(from_diffs({1, 2, 3, 4})), StatsError);
    CHECK_THROWS_AS(parse_alternative("less-ish"), StatsError);
  }
  SUBCASE("five positive differences") {
    const auto r = wilcoxon_signed_rank(from_diffs({0.1, 0.4, 0.2, 0.9, 0.3}));
    CHECK(r.p == 1.0 / 32.0);
    CHECK(r.statistic == 15.0);
    CHECK(r.exact);
    CHECK(wilcoxon_signed_rank(from_diffs({0.1, 0.4, 0.2, 0.9, 0.3}), Alternative::TwoSided).p == 1.0 / 16.0);
  }
  SUBCASE("zero differences are dropped") {
    auto pairs = from_diffs({0.1, 0.4, 0.2, 0.9, 0.3});
    pairs.emplace_back(2.0, 2.0);
    const auto r = wilcoxon_signed_rank(pairs);
    CHECK(r.n == 5);
    CHECK(r.p == 1.0 / 32.0);
  }
  SUBCASE("exact p equals enumeration of sign assignments") {
    num::Rng rng(12);
    for (int inst = 0; inst < 200; ++inst) {
      const std::size_t n = 5 + rng.below(8);
      std::vector<double> d;
      while (d.size() < n) {
        // Small integer grid so that ties are common.
        const double v = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
        if (v != 0.0) d.push_back(v + (inst % 2 ? rng.uniform(-0.4, 0.4) : 0.0));
      }
      const auto [greater, two] = enumerate_p(d);
      CAPTURE(inst);
      CHECK(wilcoxon_signed_rank(from_diffs(d)).p == greater);
      CHECK(wilcoxon_signed_rank(from_diffs(d), Alternative::TwoSided).p == two);
    }
  }
  SUBCASE("normal approximation beyond twenty pairs") {
    std::vector<double> d;
    for (int i = 0; i < 30; ++i) {
      const double v = static_cast<double>((i * 7) % 11) - 3.0;
      d.push_back(v != 0.0 ? v : 0.5);
    }
    const auto r = wilcoxon_signed_rank(from_diffs(d));
    CHECK_FALSE(r.exact);
    CHECK(r.statistic == 375.5);
    // Reference values from an independent implementation (tie-corrected, no
    // continuity correction).
    CHECK(r.p == doctest::Approx(0.0015968403484727606).epsilon(1e-10));
    CHECK(wilcoxon_signed_rank(from_diffs(d), Alternative::TwoSided).p ==
          doctest::Approx(0.003193680696945521).epsilon(1e-10));
  }
  SUBCASE("exact and approximate agree at the boundary") {
    num::Rng rng(3);
    std::vector<double> d;
    for (int i = 0; i < 20; ++i) d.push_back(rng.normal(0.4, 1.0));
    const double exact = wilcoxon_signed_rank(from_diffs(d)).p;
    d.push_back(rng.normal(0.4, 1.0));
    const double approx = wilcoxon_signed_rank(from_diffs(d)).p;
    CHECK(std::abs(exact - approx) < 0.05);
  }
  SUBCASE("tied ranks") {
    const std::vector<double> v = {3.0, 1.0, 3.0 + 1e-12, 2.0, 3.0};
    const auto r = tied_ranks(v);
    CHECK(r == std::vector<double>{4.0, 1.0, 4.0, 2.0, 4.0});
  }
}

TEST_CASE("statistics on the reference success table") {
  const auto rows = reference_table3();
  REQUIRE(rows.size() == 64);
  const auto dense = paired_success(rows, "dense", "sparse");
  const auto visual = paired_success(rows, "visual-dense", "visual-sparse");
  REQUIRE(dense.size() == 16);
  REQUIRE(visual.size() == 16);
  const auto rd = wilcoxon_signed_rank(dense), rv = wilcoxon_signed_rank(visual);
  CHECK(rd.n == 16);
  CHECK(rd.statistic == 112.5);
  CHECK(rd.p == doctest::Approx(0.009368896484375).epsilon(1e-12));
  CHECK(rv.statistic == 102.5);
  CHECK(rv.p == doctest::Approx(0.037994384765625).epsilon(1e-12));

  const auto rank = ranking(rows);
  REQUIRE(rank.size() == 4);
  const std::vector<std::pair<std::string, double>> expected = {
      {"ddpg", 81.4}, {"sac", 77.8}, {"td3", 75.7}, {"ppo", 12.1}};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rank[i].algorithm == expected[i].first);
    CHECK(std::abs(100.0 * rank[i].mean - expected[i].second) <= 0.1);
    CHECK(rank[i].cells == 16);
  }
  CHECK(std::lround(100.0 * rank[0].std) == 18);
  CHECK(table3_csv(rows) == slurp(fs::path(RWL_SOURCE_DIR) / "data/reference_table3.csv"));
}

TEST_CASE("summary statistics") {
  const std::vector<double> v = {1.0, 2.0, 4.0};
  CHECK(mean(v) == doctest::Approx(7.0 / 3.0));
  CHECK(sample_std(v) == doctest::Approx(std::sqrt((16.0 / 9.0 + 1.0 / 9.0 + 25.0 / 9.0) / 2.0)));
  CHECK(sample_std(std::vector<double>{5.0}) == 0.0);
  CHECK_THROWS_AS(mean(std::vector<double>{}), StatsError);
}

TEST_CASE("policy evaluation") {
  SUBCASE("random policy on reacher rarely succeeds") {
    num::Rng rng(5);
    const auto rep = evaluate_policy(
        [&](const envs::EnvState&) { return std::vector<double>{rng.uniform(-1, 1), rng.uniform(-1, 1)}; },
        envs::TaskId::Reacher, 100, 1);
    CHECK(rep.success_rate <= 0.10);
  }
  for (envs::TaskId task : envs::kAllTasks) {
    CAPTURE(envs::task_name(task));
    const auto rep = evaluate_policy(demos::scripted_expert, task, 100, 2);
    CHECK(rep.success_rate >= 0.95);
    int wins = 0;
    long len = 0;
    for (const auto& e : rep.episodes) {
      CHECK(e.length >= 1);
      CHECK(e.length <= envs::kMaxEpisodeSteps);
      wins += e.success ? 1 : 0;
      len += e.length;
    }
    CHECK(rep.success_rate == static_cast<double>(wins) / 100.0);
    CHECK(rep.avg_length == static_cast<double>(len) / 100.0);
  }
  CHECK_THROWS_AS(evaluate_policy(demos::scripted_expert, envs::TaskId::Pusher, 0, 1), std::invalid_argument);
  CHECK(eval_episode_seed(1, 0) != train_episode_seed(1, 0));
}

TEST_CASE("run config JSON") {
  RunConfig c = tiny_run(9);
  c.reward = rewards::RewardKind::VisualSparse;
  c.classifier = "models/pendulum.bin";
  c.render.occlude_target = true;
  const auto j = to_json(c);
  const RunConfig back = run_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.cell() == "pendulum-sac-visual-sparse");
  CHECK(run_config_from_json(j, "/base").classifier == fs::path("/base/models/pendulum.bin"));

  auto bad = j;
  bad["steps"] = 10;
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  bad = j;
  bad["agent"]["seed"] = 3;
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  bad = j;
  bad["version"] = kRunFormatVersion + 1;
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  bad = j;
  bad["task"] = "walker";
  CHECK_THROWS_AS(run_config_from_json(bad), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
  CHECK(format_hhmm(3 * 3600 + 25 * 60 + 59) == "03:25");
  CHECK(format_hhmm(0) == "00:00");
}

TEST_CASE("training runs") {
  rwl::testing::TempDir tmp;
  const RunConfig cfg = tiny_run(4);
  const auto a = run_training(cfg, tmp.path() / "a");
  const auto b = run_training(cfg, tmp.path() / "b");
  for (const char* f : {"config.json", "curve.csv", "eval.csv"}) {
    CAPTURE(f);
    CHECK(slurp(tmp.path() / "a" / f) == slurp(tmp.path() / "b" / f));
  }
  CHECK(fs::exists(tmp.path() / "a" / "agent.bin"));
  REQUIRE(a.curve.size() == 3);
  CHECK(a.curve[0].step == 250);
  CHECK(a.curve[1].step == 500);
  CHECK(a.curve[2].step == 600);
  CHECK(a.eval.episodes.size() == 4);

  SUBCASE("directory reuse needs force") {
    CHECK_THROWS_AS(run_training(cfg, tmp.path() / "a"), RunDirectoryError);
    RunOptions force;
    force.force = true;
    int points = 0;
    force.on_curve_point = [&](const CurvePoint&) { ++points; };
    run_training(cfg, tmp.path() / "a", force);
    CHECK(points == 3);
    CHECK(slurp(tmp.path() / "a" / "curve.csv") == slurp(tmp.path() / "b" / "curve.csv"));
  }
  SUBCASE("visual kind with a missing checkpoint writes nothing") {
    RunConfig v = cfg;
    v.reward = rewards::RewardKind::VisualDense;
    v.classifier = tmp.path() / "gone.bin";
    CHECK_THROWS_AS(run_training(v, tmp.path() / "v"), ConfigError);
    CHECK_FALSE(fs::exists(tmp.path() / "v"));
    v.classifier.reset();
    CHECK_THROWS_AS(run_training(v, tmp.path() / "v"), ConfigError);
  }
  SUBCASE("summaries read back") {
    const RunSummary s = load_run(tmp.path() / "a");
    CHECK(s.eval.success_rate == a.eval.success_rate);
    CHECK(s.eval.avg_length == a.eval.avg_length);
    CHECK(s.curve.size() == a.curve.size());
    for (std::size_t i = 0; i < s.curve.size(); ++i) {
      CHECK(s.curve[i].step == a.curve[i].step);
      CHECK(s.curve[i].success_rate == a.curve[i].success_rate);
      CHECK(s.curve[i].return_mean == a.curve[i].return_mean);
    }
    const auto rows = table3({s});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].success_mean == a.eval.success_rate);
    CHECK(rows[0].length_mean == a.eval.avg_length);
    CHECK(rows[0].success_std == 0.0);
    // Duplicate identical-seed runs have zero spread.
    const auto dup = table3({s, load_run(tmp.path() / "b")});
    CHECK(dup[0].runs == 2);
    CHECK(dup[0].success_std == 0.0);
    CHECK(dup[0].success_mean == rows[0].success_mean);
  }
  SUBCASE("checkpoint evaluation checks the task") {
    const auto rep = evaluate_checkpoint(tmp.path() / "a" / "agent.bin", cfg, 4);
    CHECK(rep.success_rate == a.eval.success_rate);
    RunConfig other = cfg;
    other.task = envs::TaskId::Reacher;
    CHECK_THROWS_AS(evaluate_checkpoint(tmp.path() / "a" / "agent.bin", other, 4), ConfigError);
  }
}

TEST_CASE("visual reward runs") {
  rwl::testing::TempDir tmp;
  clf::Architecture arch;
  arch.block_channels = {2, 2, 2, 2, 2, 2};
  arch.final_channels = 2;
  arch.head_hidden = 4;
  clf::save_model(clf::ClassifierModel::build(arch, 1), tmp.path() / "clf.bin");
  RunConfig cfg = tiny_run(2);
  cfg.total_steps = 120;
  cfg.eval_interval = 60;
  cfg.eval_episodes = 1;
  cfg.curve_episodes = 1;
  cfg.reward = rewards::RewardKind::VisualDense;
  cfg.classifier = tmp.path() / "clf.bin";
  const auto r = run_training(cfg, tmp.path() / "run");
  CHECK(r.timing.reward_latency_ms_mean > 0.0);
  // Visual dense returns are sums of 2P - 1, bounded by the episode length.
  for (const auto& p : r.curve) CHECK(std::abs(p.return_mean) <= envs::kMaxEpisodeSteps);
  const RunSummary s = load_run(tmp.path() / "run");
  CHECK(s.config.classifier == tmp.path() / "clf.bin");
  CHECK(s.timing.reward_latency_ms_mean == r.timing.reward_latency_ms_mean);
}

TEST_CASE("report outputs") {
  rwl::testing::TempDir tmp;
  std::vector<fs::path> dirs;
  std::vector<double> success;
  for (std::uint64_t seed : {1, 2}) {
    const auto d = tmp.path() / ("run" + std::to_string(seed));
    success.push_back(run_training(tiny_run(seed), d).eval.success_rate);
    dirs.push_back(d);
  }
  std::ofstream(tmp.path() / "clf.csv") << "task,arch,seed,acc,precision,recall,f1,auc\n"
                                        << "pendulum,tcnn,1,1.000000,1.000000,1.000000,1.000000,1.000000\n"
                                        << "pendulum,tcnn,2,0.900000,0.800000,1.000000,0.888889,0.950000\n"
                                        << "pendulum,cnn,1,0.500000,0.500000,0.500000,0.500000,0.500000\n";
  const auto files = report(dirs, {tmp.path() / "clf.csv"}, tmp.path() / "out");
  for (const char* f : {"table3.csv", "table5.csv", "ranking.csv", "table2.csv", "curves/pendulum-sac-dense.png"}) {
    CAPTURE(f);
    CHECK(fs::exists(tmp.path() / "out" / f));
  }
  CHECK(files.written.size() == 5);

  // Aggregates match a recomputation from the raw eval files.
  double rates[2];
  for (int k = 0; k < 2; ++k) {
    std::istringstream is(slurp(dirs[static_cast<std::size_t>(k)] / "eval.csv"));
    std::string line;
    std::getline(is, line);
    int wins = 0, total = 0;
    while (std::getline(is, line)) {
      wins += line.substr(line.find(',') + 1, 1) == "1" ? 1 : 0;
      ++total;
    }
    rates[k] = static_cast<double>(wins) / total;
    CHECK(rates[k] == success[static_cast<std::size_t>(k)]);
  }
  const auto rows = read_table3_csv(tmp.path() / "out" / "table3.csv");
  REQUIRE(rows.size() == 1);
  const double m = 0.5 * (rates[0] + rates[1]);
  CHECK(std::abs(rows[0].success_mean - m) < 1e-12);
  CHECK(std::abs(rows[0].success_std - std::abs(rates[0] - rates[1]) / std::sqrt(2.0)) < 1e-12);

  const std::string t2 = slurp(tmp.path() / "out" / "table2.csv");
  CHECK(t2.find("pendulum,tcnn,2,0.95,0.9,1,0.9444445,0.975") != std::string::npos);
  CHECK(t2.find("pendulum,cnn,1,0.5,0.5,0.5,0.5,0.5") != std::string::npos);
  const auto png = render::load_png(tmp.path() / "out" / "curves/pendulum-sac-dense.png");
  CHECK(png.width == 480);

  SUBCASE("incompatible versions and unfinished runs") {
    auto cfg_text = slurp(dirs[1] / "config.json");
    const auto pos = cfg_text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    cfg_text.replace(pos, 12, "\"version\": 2");
    std::ofstream(dirs[1] / "config.json") << cfg_text;
    CHECK_THROWS_AS(report(dirs, {}, tmp.path() / "out2"), RunDirectoryError);
    fs::remove(dirs[0] / "timing.json");
    CHECK_THROWS_AS(load_run(dirs[0]), RunDirectoryError);
    CHECK_THROWS_AS(report({}, {}, tmp.path() / "out3"), RunDirectoryError);
  }
}

TEST_CASE("curve plots") {
  std::vector<CurvePoint> a = {{100, 0, 0.0}, {200, 0, 0.5}, {300, 0, 1.0}};
  std::vector<CurvePoint> b = {{100, 0, 0.2}, {200, 0, 0.5}, {300, 0, 0.6}};
  const auto img = plot_curves({a, b});
  CHECK(img.width == 480);
  CHECK(img.height == 320);
  int band = 0, line = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      band += img.at(x, y) == render::Rgb{180, 205, 240} ? 1 : 0;
      line += img.at(x, y) == render::Rgb{30, 80, 180} ? 1 : 0;
    }
  }
  CHECK(band > 100);
  CHECK(line > 400);
  b[1].step = 250;
  CHECK_THROWS_AS(plot_curves({a, b}), RunDirectoryError);
  CHECK_THROWS_AS(plot_curves({}), std::invalid_argument);
}
