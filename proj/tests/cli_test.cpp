#include <doctest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "commands.hpp"
#include "label_server.hpp"
#include "rwl/demos/dataset.hpp"
#include "rwl/experiments/report.hpp"
#include "support/tempdir.hpp"

using namespace rwl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "rwl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

const std::string kTable3 = std::string(RWL_SOURCE_DIR) + "/data/reference_table3.csv";

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"collect", "--task", "pendulum"}).code == 1);  // --out missing
  CHECK(run({"collect", "--task", "walker", "--out", "/tmp/x"}).code == 1);
  CHECK(run({"collect", "--task", "pendulum", "--n", "0", "--out", "/tmp/x"}).code == 1);
  CHECK(run({"collect", "--task", "pendulum", "--resolution", "50", "--out", "/tmp/x"}).code == 1);
  CHECK(run({"stats", "--table3", kTable3}).code == 1);
  CHECK(run({"stats", "--table3", kTable3, "--compare", "dense"}).code == 1);
  CHECK(run({"stats", "--table3", kTable3, "--compare", "dense:shiny"}).code == 1);
  CHECK(run({"train-classifier", "--train", "d", "--out", "m.bin", "--arch", "rnn"}).code == 1);
  const auto r = run({"stats", "--table3", kTable3, "--bogus"});
  CHECK(r.code == 1);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("every command has help, --seed and --out") {
  for (const char* cmd : {"collect", "label-serve", "train-classifier", "eval-classifier", "train-agent", "eval-agent",
                          "report", "stats"}) {
    CAPTURE(cmd);
    const auto r = run({cmd, "--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("--seed") != std::string::npos);
    CHECK(r.out.find("--out") != std::string::npos);
  }
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("runtime failures exit 2") {
  const auto r = run({"train-agent", "--config", "/nonexistent/missing.json", "--out", "/tmp/rwl-never"});
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/missing.json") != std::string::npos);
  CHECK(run({"eval-classifier", "--model", "/nonexistent/m.bin", "--test", "/nonexistent/d"}).code == 2);
  CHECK(run({"stats", "--table3", "/nonexistent/t.csv", "--ranking"}).code == 2);
  CHECK(run({"report", "--runs", "/nonexistent", "--out", "/tmp/rwl-never-report"}).code == 2);
}

TEST_CASE("stats on the reference table") {
  const auto r = run({"stats", "--table3", kTable3, "--compare", "dense:sparse", "--ranking"});
  CHECK(r.code == 0);
  CHECK(r.out.find("n=16 W+=112.5 p=0.0093689") != std::string::npos);
  CHECK(r.out.find("ddpg 81.4%") != std::string::npos);
  rwl::testing::TempDir tmp;
  const auto j = tmp.path() / "s.json";
  CHECK(run({"stats", "--table3", kTable3, "--compare", "visual-dense:visual-sparse", "--exclude", "ppo", "--out",
             j.string()})
            .code == 0);
  const auto res = json::parse(slurp(j));
  CHECK(res["wilcoxon"]["n"] == 12);
  CHECK(res["wilcoxon"]["p"].get<double>() < 0.05);
  CHECK(run({"stats", "--table3", kTable3, "--ranking", "--out", j.string()}).code == 1);
  CHECK(run({"stats", "--table3", kTable3, "--ranking", "--out", j.string(), "--force"}).code == 0);
}

TEST_CASE("pipeline commands") {
  rwl::testing::TempDir tmp;
  const auto p = [&](const char* name) { return (tmp.path() / name).string(); };

  REQUIRE(run({"collect", "--task", "pendulum", "--n", "3", "--seed", "7", "--out", p("train")}).code == 0);
  REQUIRE(run({"collect", "--task", "pendulum", "--n", "3", "--seed", "7", "--out", p("again")}).code == 0);
  CHECK(slurp(tmp.path() / "train/manifest.json") == slurp(tmp.path() / "again/manifest.json"));
  REQUIRE(run({"collect", "--task", "pendulum", "--n", "3", "--seed", "8", "--split", "test", "--out", p("test")}).code == 0);
  CHECK(run({"collect", "--task", "pendulum", "--n", "3", "--out", p("train")}).code == 1);
  CHECK(run({"collect", "--task", "pendulum", "--n", "2", "--out", p("train"), "--force"}).code == 0);
  CHECK(demos::load(tmp.path() / "train").episodes.size() == 2);
  std::ofstream(tmp.path() / "notes.txt") << "keep";
  fs::create_directories(tmp.path() / "precious");
  std::ofstream(tmp.path() / "precious/file") << "keep";
  CHECK(run({"collect", "--task", "pendulum", "--out", p("precious"), "--force"}).code == 1);
  CHECK(fs::exists(tmp.path() / "precious/file"));

  const auto unl = run({"collect", "--task", "reacher", "--n", "1", "--labels", "none", "--out", p("human")});
  CHECK(unl.code == 0);
  CHECK(unl.out.find("0 positive, 0 negative") != std::string::npos);

  SUBCASE("classifier commands") {
    const auto tc = run({"train-classifier", "--train", p("train"), "--test", p("test"), "--epochs", "1", "--seed", "3",
                         "--out", p("models/clf.bin")});
    REQUIRE(tc.code == 0);
    CHECK(fs::exists(tmp.path() / "models/clf.bin.json"));
    CHECK(tc.out.find("pendulum,tcnn,3,") != std::string::npos);
    CHECK(run({"train-classifier", "--train", p("train"), "--epochs", "1", "--out", p("models/clf.bin")}).code == 1);
    const auto ec = run({"eval-classifier", "--model", p("models/clf.bin"), "--test", p("test"), "--out", p("m.csv")});
    CHECK(ec.code == 0);
    CHECK(slurp(tmp.path() / "m.csv") == ec.out);
    CHECK(run({"train-classifier", "--train", p("nowhere"), "--out", p("x.bin")}).code == 2);
  }

  SUBCASE("agent commands") {
    const json cfg = {{"task", "pendulum"},
                      {"reward", "dense"},
                      {"seed", 5},
                      {"total_steps", 400},
                      {"eval_interval", 200},
                      {"eval_episodes", 3},
                      {"curve_episodes", 1},
                      {"agent", {{"algorithm", "td3"}, {"hidden", {16, 16}}, {"warmup_steps", 50}, {"batch_size", 16}}}};
    std::ofstream(tmp.path() / "run.json") << cfg.dump();
    const auto a = run({"train-agent", "--config", p("run.json"), "--out", p("runs/a")});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("step 200") != std::string::npos);
    REQUIRE(run({"train-agent", "--config", p("run.json"), "--out", p("runs/b")}).code == 0);
    for (const char* f : {"curve.csv", "eval.csv", "config.json"}) {
      CAPTURE(f);
      CHECK(slurp(tmp.path() / "runs/a" / f) == slurp(tmp.path() / "runs/b" / f));
    }
    CHECK(run({"train-agent", "--config", p("run.json"), "--out", p("runs/a")}).code == 1);
    CHECK(run({"train-agent", "--config", p("run.json"), "--seed", "6", "--out", p("runs/c")}).code == 0);
    CHECK(json::parse(slurp(tmp.path() / "runs/c/config.json"))["seed"] == 6);
    CHECK(run({"train-agent", "--config", p("run.json"), "--steps", "300", "--out", p("short/d")}).code == 0);
    // A cell mixing step budgets is refused.
    CHECK(run({"report", "--runs", p("runs"), p("short"), "--out", p("mixed")}).code == 2);

    const auto e = run({"eval-agent", "--run", p("runs/a"), "--episodes", "3", "--out", p("e.csv")});
    CHECK(e.code == 0);
    CHECK(slurp(tmp.path() / "e.csv") == slurp(tmp.path() / "runs/a/eval.csv"));

    const auto rep = run({"report", "--runs", p("runs"), "--out", p("report")});
    CHECK(rep.code == 0);
    CHECK(fs::exists(tmp.path() / "report/table3.csv"));
    CHECK(fs::exists(tmp.path() / "report/curves/pendulum-td3-dense.png"));
    CHECK(exp::read_table3_csv(tmp.path() / "report/table3.csv")[0].runs == 3);
    CHECK(run({"report", "--runs", p("runs/a"), "--out", p("report")}).code == 1);
    CHECK(run({"report", "--runs", p("runs/a"), "--out", p("report"), "--force"}).code == 0);

    std::ofstream(tmp.path() / "bad.json") << R"({"task": "pendulum", "reward": "visual-dense"})";
    CHECK(run({"train-agent", "--config", p("bad.json"), "--out", p("runs/bad")}).code == 2);
    CHECK_FALSE(fs::exists(tmp.path() / "runs/bad"));
  }
}

TEST_CASE("label server HTTP API") {
  rwl::testing::TempDir tmp;
  auto set = demos::collect(envs::TaskId::Pendulum, 10, 4);
  demos::save(set, tmp.path());
  const int ep0_len = set.episodes[0].length();

  auto server = std::make_unique<cli::LabelServer>(tmp.path(), tmp.path() / "log.json");
  const int port = server->bind("127.0.0.1", 0);
  std::thread th([&] { server->listen(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);

  CHECK_THROWS_AS(cli::LabelServer(tmp.path()), cli::DatasetLockedError);
  CHECK(run({"label-serve", "--data", tmp.path().string(), "--port", "0"}).code == 2);

  auto get = cli.Get("/api/episodes");
  REQUIRE(get);
  CHECK(get->status == 200);
  const auto eps = json::parse(get->body);
  REQUIRE(eps.size() == 10);
  CHECK(eps[0]["id"] == 0);
  CHECK(eps[0]["task"] == "pendulum");
  CHECK(eps[0]["length"] == ep0_len);
  CHECK(eps[0]["labeled_count"] == 0);

  auto frame = cli.Get("/api/episodes/0/frames/3");
  REQUIRE(frame);
  CHECK(frame->status == 200);
  CHECK(frame->get_header_value("Content-Type") == "image/png");
  const std::vector<std::uint8_t> bytes(frame->body.begin(), frame->body.end());
  CHECK(render::decode_png(bytes) == set.episodes[0].frames[3].image);
  CHECK(cli.Get("/api/episodes/10/frames/0")->status == 404);
  CHECK(cli.Get("/api/episodes/0/frames/" + std::to_string(ep0_len))->status == 404);
  CHECK(cli.Get("/api/episodes/x/frames/0")->status == 404);
  CHECK(cli.Get("/api/episodes/99/labels")->status == 404);

  auto post = [&](const std::string& body) { return cli.Post("/api/labels", body, "application/json"); };
  auto ok = post(R"({"episode": 0, "frame": 3, "y": 1})");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  CHECK(json::parse(ok->body)["ok"] == true);
  // Write-through: the manifest on disk already holds the label.
  const auto reloaded = demos::load(tmp.path());
  CHECK(reloaded.episodes[0].frames[3].y == 1);
  CHECK(reloaded.episodes[0].frames[3].source == demos::LabelSource::Human);

  auto big = post(R"({"episode": 0, "frame": 1000000, "y": 1})");
  CHECK(big->status == 422);
  CHECK(json::parse(big->body)["frame"] == 1000000);
  CHECK(big->body.find("1000000") != std::string::npos);
  CHECK(post(R"({"episode": 0, "frame": 2, "y": 2})")->status == 422);
  CHECK(post(R"({"episode": 0, "frame": -1, "y": 0})")->status == 422);
  CHECK(post(R"({"episode": 0, "y": 0})")->status == 422);
  CHECK(post(R"({"episode": "0", "frame": 1, "y": 0})")->status == 422);
  CHECK(post("not json")->status == 422);
  CHECK(post(R"({"episode": 42, "frame": 1, "y": 0})")->status == 404);

  // Concurrent readers alongside ordered writes; last write wins.
  std::vector<std::thread> readers;
  std::atomic<int> good{0};
  for (int k = 0; k < 4; ++k) {
    readers.emplace_back([&] {
      httplib::Client c("127.0.0.1", port);
      for (int i = 0; i < 10; ++i) {
        auto r = c.Get("/api/progress");
        if (r && r->status == 200) ++good;
      }
    });
  }
  for (int t = 0; t < 6; ++t) {
    CHECK(post(json{{"episode", 1}, {"frame", t}, {"y", t % 2}}.dump())->status == 200);
  }
  CHECK(post(R"({"episode": 1, "frame": 0, "y": 1})")->status == 200);
  for (auto& r : readers) r.join();
  CHECK(good == 40);

  const auto labels = json::parse(cli.Get("/api/episodes/1/labels")->body);
  REQUIRE(labels.size() == 6);
  CHECK(labels[0] == json{{"frame", 0}, {"y", 1}, {"source", "human"}});
  CHECK(labels[1]["y"] == 1);
  CHECK(labels[2]["y"] == 0);
  const auto prog = json::parse(cli.Get("/api/progress")->body);
  CHECK(prog["labeled"] == 7);
  CHECK(prog["total"] == set.frame_count());
  CHECK(json::parse(cli.Get("/api/episodes")->body)[1]["labeled_count"] == 6);

  server->stop();
  th.join();
  server.reset();
  CHECK_FALSE(fs::exists(cli::LabelServer::lock_path(tmp.path())));
  CHECK(json::parse(slurp(tmp.path() / "log.json")).size() == 8);
  const auto final_set = demos::load(tmp.path());
  CHECK(final_set.episodes[1].frames[0].y == 1);
  CHECK(final_set.episodes[1].frames[5].y == 1);
  CHECK_FALSE(final_set.episodes[1].frames[6].y.has_value());
}
