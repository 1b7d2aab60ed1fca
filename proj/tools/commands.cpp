#include "commands.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "label_server.hpp"
#include "rwl/classifier/classifier.hpp"
#include "rwl/demos/dataset.hpp"
#include "rwl/experiments/report.hpp"
#include "rwl/experiments/run.hpp"
#include "rwl/experiments/stats.hpp"

namespace rwl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A flag combination rejected before anything ran.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  auto* o = cmd->add_option("--out", c.out, out_help);
  if (out_required) o->required();
  cmd->add_flag("--force", c.force, "Overwrite existing outputs");
}

void check_fresh(const fs::path& p, bool force) {
  if (!fs::exists(p)) return;
  if (fs::is_directory(p) && fs::is_empty(p)) return;
  if (!force) throw UsageError(p.string() + " already exists (use --force to overwrite)");
}

template <class F>
auto usage_guard(F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

// Run directories named directly, or found one level below.
std::vector<fs::path> expand_runs(const std::vector<std::string>& args) {
  std::vector<fs::path> dirs;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::exists(p / "config.json")) {
      dirs.push_back(p);
      continue;
    }
    if (!fs::is_directory(p)) throw exp::RunDirectoryError("not a run directory: " + a);
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_directory() && fs::exists(e.path() / "config.json")) found.push_back(e.path());
    }
    if (found.empty()) throw exp::RunDirectoryError("no run directories under " + a);
    std::sort(found.begin(), found.end());
    dirs.insert(dirs.end(), found.begin(), found.end());
  }
  return dirs;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual success classifiers and reward learning for continuous control."};
  app.name("rwl");
  app.require_subcommand(1);
  std::function<void()> action;

  // collect
  Common collect_c;
  std::string collect_task, collect_split = "train", collect_labels = "auto";
  int collect_n = 10, collect_res = render::kDefaultResolution;
  bool collect_occlude = false;
  auto* collect = app.add_subcommand("collect", "Roll out the scripted expert and save a demonstration set");
  add_common(collect, collect_c, true, "Dataset directory");
  collect->add_option("--task", collect_task, "pendulum | reacher | pusher | fetch")->required();
  collect->add_option("--n", collect_n, "Successful episodes to keep")->check(CLI::PositiveNumber)->capture_default_str();
  collect->add_option("--split", collect_split, "train | test")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  collect->add_option("--labels", collect_labels, "auto: label from the success predicate; none: leave for a human")
      ->check(CLI::IsMember({"auto", "none"}))
      ->capture_default_str();
  collect->add_option("--resolution", collect_res, "Frame size in pixels")->capture_default_str();
  collect->add_flag("--occlude", collect_occlude, "Let the arm hide the goal marker");
  collect->callback([&] {
    const auto task = usage_guard([&] { return envs::parse_task(collect_task); });
    if (!render::is_supported_resolution(collect_res)) {
      throw UsageError("unsupported resolution " + std::to_string(collect_res));
    }
    const fs::path dir(collect_c.out);
    if (fs::exists(dir) && !fs::is_empty(dir)) {
      if (!collect_c.force) throw UsageError(dir.string() + " already exists (use --force to overwrite)");
      if (!fs::exists(dir / "manifest.json")) throw UsageError(dir.string() + " is not a dataset directory; refusing to replace it");
    }
    action = [&, task, dir] {
      const render::RenderConfig rc{collect_res, collect_occlude};
      const auto split = demos::parse_split(collect_split);
      demos::DemoSet set;
      if (collect_labels == "auto") {
        set = demos::collect_labeled(task, collect_n, collect_c.seed, split, rc);
      } else {
        set = demos::collect(task, collect_n, collect_c.seed, split, rc);
        for (auto& ep : set.episodes) ep = demos::timing_labels(std::move(ep));
      }
      if (fs::exists(dir)) fs::remove_all(dir);
      demos::save(set, dir);
      const auto c = demos::count_labels(set);
      out << "collected " << set.episodes.size() << " " << envs::task_name(task) << " episodes, "
          << set.frame_count() << " frames (" << c.positives << " positive, " << c.negatives << " negative, "
          << c.unlabeled << " unlabeled) -> " << dir.string() << "\n";
    };
  });

  // label-serve
  Common serve_c;
  std::string serve_data, serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve = app.add_subcommand("label-serve", "Serve a dataset to the labelling UI");
  add_common(serve, serve_c, false, "Also keep a JSON log of received labels here");
  serve->add_option("--data", serve_data, "Dataset directory")->required();
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_port, "TCP port, 0 for any free one")->check(CLI::Range(0, 65535))->capture_default_str();
  serve->callback([&] {
    if (!fs::exists(fs::path(serve_data) / "manifest.json")) throw UsageError("no dataset at " + serve_data);
    if (!serve_c.out.empty()) check_fresh(serve_c.out, serve_c.force);
    action = [&] {
      std::optional<fs::path> log;
      if (!serve_c.out.empty()) log = serve_c.out;
      LabelServer server(serve_data, log);
      const int port = server.bind(serve_host, serve_port);
      out << "serving " << serve_data << " on http://" << serve_host << ":" << port << " (Ctrl-C to stop)\n"
          << std::flush;
      g_interrupted = false;
      auto prev_int = std::signal(SIGINT, on_signal);
      auto prev_term = std::signal(SIGTERM, on_signal);
      std::atomic<bool> done{false};
      std::thread watcher([&] {
        while (!done) {
          if (g_interrupted) {
            server.stop();
            break;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
      });
      server.listen();
      done = true;
      watcher.join();
      std::signal(SIGINT, prev_int);
      std::signal(SIGTERM, prev_term);
      server.flush();
      out << "labels saved to " << serve_data << "\n";
    };
  });

  // train-classifier
  Common tc_c;
  std::string tc_train, tc_test, tc_arch = "tcnn", tc_symmetry;
  clf::TrainHyper tc_hyper;
  auto* tc = app.add_subcommand("train-classifier", "Train a CNN or T-CNN success classifier");
  add_common(tc, tc_c, true, "Model file (parameters; metadata goes to <out>.json)");
  tc->add_option("--train", tc_train, "Training dataset directory")->required();
  tc->add_option("--test", tc_test, "Optional held-out dataset to evaluate afterwards");
  tc->add_option("--arch", tc_arch, "cnn | tcnn")->check(CLI::IsMember({"cnn", "tcnn"}))->capture_default_str();
  tc->add_option("--epochs", tc_hyper.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  tc->add_option("--batch", tc_hyper.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  tc->add_option("--lr", tc_hyper.lr)->check(CLI::PositiveNumber)->capture_default_str();
  tc->add_option("--timing-weight", tc_hyper.timing_weight, "Weight of the timing loss")->capture_default_str();
  tc->add_option("--symmetry", tc_symmetry, "none | mirror-x | dihedral (default: per task)");
  tc->callback([&] {
    const auto arch = clf::parse_arch(tc_arch);
    std::optional<clf::Symmetry> sym;
    if (!tc_symmetry.empty()) sym = usage_guard([&] { return clf::parse_symmetry(tc_symmetry); });
    check_fresh(tc_c.out, tc_c.force);
    action = [&, arch, sym] {
      const auto train = demos::load(tc_train);
      clf::Architecture a;
      a.kind = arch;
      a.resolution = train.render.resolution;
      clf::TrainHyper h = tc_hyper;
      h.seed = tc_c.seed;
      h.symmetry = sym;
      const auto t0 = std::chrono::steady_clock::now();
      auto model = clf::train(clf::ClassifierModel::build(a, tc_c.seed), train, h);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (fs::path(tc_c.out).has_parent_path()) fs::create_directories(fs::path(tc_c.out).parent_path());
      clf::save_model(model, tc_c.out);
      out << "trained " << tc_arch << " on " << train.frame_count() << " frames in " << fixed(secs, 1)
          << " s, final loss " << fixed(model.meta().loss_curve.back(), 5) << " -> " << tc_c.out << "\n";
      if (!tc_test.empty()) {
        const auto test = demos::load(tc_test);
        out << clf::metrics_csv_header() << "\n"
            << clf::metrics_csv_row(test.task, arch, tc_c.seed, clf::evaluate(model, test)) << "\n";
      }
    };
  });

  // eval-classifier
  Common ec_c;
  std::string ec_model, ec_test;
  auto* ec = app.add_subcommand("eval-classifier", "Score a classifier on a labelled dataset");
  add_common(ec, ec_c, false, "Metrics CSV to write");
  ec->add_option("--model", ec_model, "Model file")->required();
  ec->add_option("--test", ec_test, "Dataset directory")->required();
  ec->callback([&] {
    if (!ec_c.out.empty()) check_fresh(ec_c.out, ec_c.force);
    action = [&] {
      const auto model = clf::load_model(ec_model);
      const auto test = demos::load(ec_test);
      const std::string text = clf::metrics_csv_header() + "\n" +
                               clf::metrics_csv_row(test.task, model.arch().kind, model.seed(), clf::evaluate(model, test)) +
                               "\n";
      out << text;
      if (!ec_c.out.empty()) std::ofstream(ec_c.out, std::ios::trunc) << text;
    };
  });

  // train-agent
  Common ta_c;
  std::string ta_config;
  std::optional<std::uint64_t> ta_seed;
  std::optional<std::size_t> ta_steps;
  auto* ta = app.add_subcommand("train-agent", "Train one agent from a run config");
  ta->add_option("--config", ta_config, "Run config JSON")->required();
  ta->add_option("--seed", ta_seed, "Override the config's seed");
  ta->add_option("--steps", ta_steps, "Override the step budget");
  ta->add_option("--out", ta_c.out, "Run directory")->required();
  ta->add_flag("--force", ta_c.force, "Reuse a non-empty run directory");
  ta->callback([&] {
    check_fresh(ta_c.out, ta_c.force);
    action = [&] {
      auto cfg = exp::load_run_config(ta_config);
      if (ta_seed) cfg.seed = *ta_seed;
      if (ta_steps) cfg.total_steps = *ta_steps;
      exp::RunOptions opt;
      opt.force = ta_c.force;
      opt.on_curve_point = [&](const exp::CurvePoint& p) {
        out << "step " << p.step << "  return " << fixed(p.return_mean, 2) << "  success " << fixed(p.success_rate, 2)
            << "\n"
            << std::flush;
      };
      const auto r = exp::run_training(cfg, ta_c.out, opt);
      out << cfg.cell() << " seed " << cfg.seed << ": success " << fixed(r.eval.success_rate, 3) << ", avg length "
          << fixed(r.eval.avg_length, 2) << ", train " << exp::format_hhmm(r.timing.train_seconds) << " -> "
          << ta_c.out << "\n";
    };
  });

  // eval-agent
  Common ea_c;
  std::string ea_run;
  int ea_episodes = 100;
  std::optional<std::uint64_t> ea_seed;
  auto* ea = app.add_subcommand("eval-agent", "Evaluate a trained agent deterministically");
  ea->add_option("--run", ea_run, "Run directory (config.json + agent.bin)")->required();
  ea->add_option("--episodes", ea_episodes)->check(CLI::PositiveNumber)->capture_default_str();
  ea->add_option("--seed", ea_seed, "Evaluation seed (default: the run's)");
  ea->add_option("--out", ea_c.out, "Per-episode CSV to write");
  ea->add_flag("--force", ea_c.force, "Overwrite --out");
  ea->callback([&] {
    if (!ea_c.out.empty()) check_fresh(ea_c.out, ea_c.force);
    action = [&] {
      auto cfg = exp::load_run_config(fs::path(ea_run) / "config.json");
      if (ea_seed) cfg.seed = *ea_seed;
      const auto rep = exp::evaluate_checkpoint(fs::path(ea_run) / "agent.bin", cfg, ea_episodes);
      out << "success " << fixed(rep.success_rate, 3) << ", avg length " << fixed(rep.avg_length, 2) << ", test "
          << fixed(rep.test_seconds, 2) << " s over " << rep.episodes.size() << " episodes\n";
      if (!ea_c.out.empty()) std::ofstream(ea_c.out, std::ios::trunc) << exp::eval_csv(rep);
    };
  });

  // report
  Common rp_c;
  std::vector<std::string> rp_runs, rp_metrics;
  auto* rp = app.add_subcommand("report", "Aggregate finished runs into tables and curves");
  add_common(rp, rp_c, true, "Output directory");
  rp->add_option("--runs", rp_runs, "Run directories, or directories holding them")->required();
  rp->add_option("--classifier-metrics", rp_metrics, "Metrics CSVs from eval-classifier");
  rp->callback([&] {
    check_fresh(fs::path(rp_c.out) / "table3.csv", rp_c.force);
    action = [&] {
      std::vector<fs::path> metrics(rp_metrics.begin(), rp_metrics.end());
      const auto files = exp::report(expand_runs(rp_runs), metrics, rp_c.out);
      for (const auto& f : files.written) out << f.string() << "\n";
    };
  });

  // stats
  Common st_c;
  std::string st_table, st_compare, st_alt = "greater";
  std::vector<std::string> st_exclude;
  bool st_ranking = false;
  auto* st = app.add_subcommand("stats", "Signed-rank tests and algorithm ranking on a table3 CSV");
  add_common(st, st_c, false, "JSON file for the results");
  st->add_option("--table3", st_table, "table3.csv")->required();
  st->add_option("--compare", st_compare, "Reward kinds a:b, e.g. dense:sparse");
  st->add_option("--alternative", st_alt, "greater | two-sided")
      ->check(CLI::IsMember({"greater", "two-sided"}))
      ->capture_default_str();
  st->add_option("--exclude", st_exclude, "Algorithms to leave out");
  st->add_flag("--ranking", st_ranking, "Rank algorithms by mean success");
  st->callback([&] {
    if (st_compare.empty() && !st_ranking) throw UsageError("stats needs --compare and/or --ranking");
    std::string a, b;
    if (!st_compare.empty()) {
      const auto colon = st_compare.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == st_compare.size()) {
        throw UsageError("--compare expects a:b, got '" + st_compare + "'");
      }
      a = st_compare.substr(0, colon);
      b = st_compare.substr(colon + 1);
      usage_guard([&] { return rewards::parse_reward_kind(a); });
      usage_guard([&] { return rewards::parse_reward_kind(b); });
    }
    if (!st_c.out.empty()) check_fresh(st_c.out, st_c.force);
    action = [&, a, b] {
      auto rows = exp::read_table3_csv(st_table);
      std::erase_if(rows, [&](const exp::Table3Row& r) {
        return std::find(st_exclude.begin(), st_exclude.end(), r.algorithm) != st_exclude.end();
      });
      json result = json::object();
      if (!a.empty()) {
        const auto pairs = exp::paired_success(rows, a, b);
        const auto w = exp::wilcoxon_signed_rank(pairs, exp::parse_alternative(st_alt));
        out << a << " vs " << b << " (" << st_alt << "): n=" << w.n << " W+=" << w.statistic << " p=" << w.p
            << (w.exact ? " (exact)" : " (normal approximation)") << "\n";
        result["wilcoxon"] = {{"a", a}, {"b", b}, {"alternative", st_alt}, {"n", w.n},
                              {"statistic", w.statistic}, {"p", w.p}, {"exact", w.exact}};
      }
      if (st_ranking) {
        json rank = json::array();
        for (const auto& r : exp::ranking(rows)) {
          out << r.algorithm << " " << fixed(100.0 * r.mean, 1) << "% +- " << fixed(100.0 * r.std, 1) << "% over "
              << r.cells << " cells\n";
          rank.push_back({{"algorithm", r.algorithm}, {"mean", r.mean}, {"std", r.std}, {"cells", r.cells}});
        }
        result["ranking"] = rank;
      }
      if (!st_c.out.empty()) std::ofstream(st_c.out, std::ios::trunc) << result.dump(2) << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    if (action) action();
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace rwl::cli
