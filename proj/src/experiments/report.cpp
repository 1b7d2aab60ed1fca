#include "rwl/experiments/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "rwl/experiments/stats.hpp"

namespace rwl::exp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw RunDirectoryError("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RunDirectoryError("cannot write " + path.string());
  os << text;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

// Non-empty lines with any trailing '\r' removed.
std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw RunDirectoryError("bad number '" + s + "' in " + where);
  return v;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

using CellKey = std::tuple<int, int, int>;

CellKey key_of(const RunConfig& c) {
  return {static_cast<int>(c.task), static_cast<int>(c.agent.algorithm), static_cast<int>(c.reward)};
}

std::map<CellKey, std::vector<const RunSummary*>> group(const std::vector<RunSummary>& runs) {
  std::map<CellKey, std::vector<const RunSummary*>> cells;
  for (const auto& r : runs) {
    auto& v = cells[key_of(r.config)];
    if (!v.empty() && (v.front()->config.total_steps != r.config.total_steps ||
                       v.front()->config.eval_episodes != r.config.eval_episodes)) {
      throw RunDirectoryError("runs " + v.front()->dir.string() + " and " + r.dir.string() +
                              " share a cell but differ in step or episode budget");
    }
    v.push_back(&r);
  }
  return cells;
}

}  // namespace

RunSummary load_run(const fs::path& dir) {
  RunSummary s;
  s.dir = dir;
  if (!fs::exists(dir / "timing.json")) throw RunDirectoryError("run " + dir.string() + " has not finished");
  try {
    s.config = load_run_config(dir / "config.json");
  } catch (const ConfigError& e) {
    throw RunDirectoryError("run " + dir.string() + ": " + e.what());
  }
  const auto where = [&](const char* f) { return (dir / f).string(); };

  const auto curve = lines_of(read_text(dir / "curve.csv"));
  if (curve.empty() || curve[0] != curve_csv_header()) throw RunDirectoryError("bad header in " + where("curve.csv"));
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto f = split(curve[i]);
    if (f.size() != 3) throw RunDirectoryError("bad row in " + where("curve.csv"));
    s.curve.push_back({static_cast<std::size_t>(to_double(f[0], where("curve.csv"))), to_double(f[1], where("curve.csv")),
                       to_double(f[2], where("curve.csv"))});
  }

  const auto eval = lines_of(read_text(dir / "eval.csv"));
  if (eval.empty() || eval[0] != "episode,success,length,return") {
    throw RunDirectoryError("bad header in " + where("eval.csv"));
  }
  int successes = 0;
  long length = 0;
  double ret = 0.0;
  for (std::size_t i = 1; i < eval.size(); ++i) {
    const auto f = split(eval[i]);
    if (f.size() != 4) throw RunDirectoryError("bad row in " + where("eval.csv"));
    EpisodeOutcome e{f[1] == "1", static_cast<int>(to_double(f[2], where("eval.csv"))), to_double(f[3], where("eval.csv"))};
    successes += e.success ? 1 : 0;
    length += e.length;
    ret += e.ret;
    s.eval.episodes.push_back(e);
  }
  const double n = static_cast<double>(s.eval.episodes.size());
  if (n == 0) throw RunDirectoryError(where("eval.csv") + " lists no episodes");
  s.eval.success_rate = successes / n;
  s.eval.avg_length = static_cast<double>(length) / n;
  s.eval.return_mean = ret / n;

  try {
    const json t = json::parse(read_text(dir / "timing.json"));
    s.timing.train_seconds = t.at("train_seconds").get<double>();
    s.timing.test_seconds_total = t.at("test_seconds_total").get<double>();
    s.timing.reward_latency_ms_mean = t.at("reward_latency_ms_mean").get<double>();
  } catch (const json::exception& e) {
    throw RunDirectoryError("bad " + where("timing.json") + ": " + e.what());
  }
  s.eval.test_seconds = s.timing.test_seconds_total;
  return s;
}

std::vector<Table3Row> table3(const std::vector<RunSummary>& runs) {
  std::vector<Table3Row> rows;
  for (const auto& [key, members] : group(runs)) {
    std::vector<double> success, length;
    for (const auto* r : members) {
      success.push_back(r->eval.success_rate);
      length.push_back(r->eval.avg_length);
    }
    const RunConfig& c = members.front()->config;
    rows.push_back({std::string(envs::task_name(c.task)), agents::to_string(c.agent.algorithm),
                    rewards::to_string(c.reward), mean(success), sample_std(success), mean(length), members.size()});
  }
  return rows;
}

std::string table3_csv(const std::vector<Table3Row>& rows) {
  std::ostringstream os;
  os << "task,algorithm,reward,success_mean,success_std,avg_length,runs\n";
  for (const auto& r : rows) {
    os << r.task << ',' << r.algorithm << ',' << r.reward << ',' << fmt(r.success_mean) << ',' << fmt(r.success_std)
       << ',' << fmt(r.length_mean) << ',' << r.runs << '\n';
  }
  return os.str();
}

std::vector<Table3Row> parse_table3_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "task,algorithm,reward,success_mean,success_std,avg_length,runs") {
    throw RunDirectoryError("not a table3 CSV (unexpected header)");
  }
  std::vector<Table3Row> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i]);
    if (f.size() != 7) throw RunDirectoryError("table3 row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    rows.push_back({f[0], f[1], f[2], to_double(f[3], "table3"), to_double(f[4], "table3"), to_double(f[5], "table3"),
                    static_cast<std::size_t>(to_double(f[6], "table3"))});
  }
  return rows;
}

std::vector<Table3Row> read_table3_csv(const fs::path& path) { return parse_table3_csv(read_text(path)); }

std::vector<RankingRow> ranking(const std::vector<Table3Row>& rows) {
  std::map<std::string, std::vector<double>> by_alg;
  for (const auto& r : rows) by_alg[r.algorithm].push_back(r.success_mean);
  std::vector<RankingRow> out;
  for (const auto& [alg, v] : by_alg) out.push_back({alg, mean(v), sample_std(v), v.size()});
  std::stable_sort(out.begin(), out.end(), [](const RankingRow& a, const RankingRow& b) { return a.mean > b.mean; });
  return out;
}

std::string ranking_csv(const std::vector<RankingRow>& rows) {
  std::ostringstream os;
  os << "algorithm,success_mean,success_std,cells\n";
  for (const auto& r : rows) os << r.algorithm << ',' << fmt(r.mean) << ',' << fmt(r.std) << ',' << r.cells << '\n';
  return os.str();
}

std::vector<std::pair<double, double>> paired_success(const std::vector<Table3Row>& rows, const std::string& a,
                                                      const std::string& b) {
  std::vector<std::pair<double, double>> out;
  for (const auto& ra : rows) {
    if (ra.reward != a) continue;
    for (const auto& rb : rows) {
      if (rb.reward == b && rb.task == ra.task && rb.algorithm == ra.algorithm) {
        out.emplace_back(ra.success_mean, rb.success_mean);
        break;
      }
    }
  }
  return out;
}

std::vector<Table5Row> table5(const std::vector<RunSummary>& runs) {
  std::vector<Table5Row> rows;
  for (const auto& [key, members] : group(runs)) {
    std::vector<double> train, test, latency;
    for (const auto* r : members) {
      train.push_back(r->timing.train_seconds);
      test.push_back(r->timing.test_seconds_total);
      latency.push_back(r->timing.reward_latency_ms_mean);
    }
    const RunConfig& c = members.front()->config;
    rows.push_back({std::string(envs::task_name(c.task)), agents::to_string(c.agent.algorithm),
                    rewards::to_string(c.reward), mean(train), mean(test), mean(latency), members.size()});
  }
  return rows;
}

std::string table5_csv(const std::vector<Table5Row>& rows) {
  std::ostringstream os;
  os << "task,algorithm,reward,train_hhmm,train_seconds,test_seconds,reward_latency_ms,runs\n";
  for (const auto& r : rows) {
    os << r.task << ',' << r.algorithm << ',' << r.reward << ',' << format_hhmm(r.train_seconds) << ','
       << fmt(r.train_seconds) << ',' << fmt(r.test_seconds) << ',' << fmt(r.reward_latency_ms) << ',' << r.runs
       << '\n';
  }
  return os.str();
}

std::string table2_csv(const std::vector<std::string>& metric_csv_texts) {
  constexpr int kMetrics = 5;
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<std::array<double, kMetrics>>> groups;
  for (const auto& text : metric_csv_texts) {
    const auto lines = lines_of(text);
    if (lines.empty() || lines[0] != "task,arch,seed,acc,precision,recall,f1,auc") {
      throw RunDirectoryError("not a classifier metrics CSV (unexpected header)");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split(lines[i]);
      if (f.size() != 8) throw RunDirectoryError("classifier metrics row has " + std::to_string(f.size()) + " fields");
      const auto key = std::make_pair(f[0], f[1]);
      if (!groups.contains(key)) order.push_back(key);
      std::array<double, kMetrics> m{};
      for (int k = 0; k < kMetrics; ++k) m[k] = to_double(f[3 + k], "classifier metrics");
      groups[key].push_back(m);
    }
  }
  std::ostringstream os;
  os << "task,arch,seeds,acc,precision,recall,f1,auc\n";
  for (const auto& key : order) {
    const auto& v = groups[key];
    os << key.first << ',' << key.second << ',' << v.size();
    for (int k = 0; k < kMetrics; ++k) {
      double s = 0.0;
      for (const auto& m : v) s += m[k];
      os << ',' << fmt(s / static_cast<double>(v.size()));
    }
    os << '\n';
  }
  return os.str();
}

render::Image plot_curves(const std::vector<std::vector<CurvePoint>>& runs) {
  constexpr int kW = 480, kH = 320, kLeft = 40, kRight = 12, kTop = 12, kBottom = 30;
  render::Image img(kW, kH, {255, 255, 255});
  if (runs.empty()) throw std::invalid_argument("plot_curves needs at least one run");
  std::size_t n = runs.front().size();
  for (const auto& r : runs) n = std::min(n, r.size());
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i].step != runs.front()[i].step) throw RunDirectoryError("curves were logged at different steps");
    }
  }
  std::vector<double> xs(n), mu(n), sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r[i].success_rate);
    xs[i] = static_cast<double>(runs.front()[i].step);
    mu[i] = mean(v);
    sd[i] = sample_std(v);
  }
  const int pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const double xmax = n ? std::max(1.0, xs.back()) : 1.0;
  auto px = [&](double x) { return kLeft + static_cast<int>(std::lround(x / xmax * pw)); };
  auto py = [&](double y) { return kTop + static_cast<int>(std::lround((1.0 - std::clamp(y, 0.0, 1.0)) * ph)); };

  for (int g = 0; g <= 4; ++g) {
    const int y = py(g / 4.0);
    for (int x = kLeft; x <= kLeft + pw; ++x) img.set(x, y, g == 0 ? render::Rgb{80, 80, 80} : render::Rgb{225, 225, 225});
  }
  for (int y = kTop; y <= kTop + ph; ++y) img.set(kLeft, y, {80, 80, 80});
  // Tick marks every fifth of the step axis.
  for (int t = 1; t <= 5; ++t) {
    const int x = kLeft + t * pw / 5;
    for (int y = kTop + ph; y < kTop + ph + 5; ++y) img.set(x, y, {80, 80, 80});
  }
  if (n == 0) return img;

  auto interp = [&](const std::vector<double>& v, double x) {
    if (x <= xs.front()) return v.front();
    for (std::size_t i = 1; i < n; ++i) {
      if (x <= xs[i]) return v[i - 1] + (v[i] - v[i - 1]) * (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    }
    return v.back();
  };
  int prev_y = -1;
  for (int x = px(xs.front()); x <= px(xs.back()); ++x) {
    const double step = static_cast<double>(x - kLeft) / pw * xmax;
    const double m = interp(mu, step), s = interp(sd, step);
    for (int y = py(m + s); y <= py(m - s); ++y) img.set(x, y, {180, 205, 240});
    const int y = py(m);
    const int lo = prev_y < 0 ? y : std::min(y, prev_y), hi = prev_y < 0 ? y : std::max(y, prev_y);
    for (int yy = lo; yy <= hi; ++yy) {
      img.set(x, yy, {30, 80, 180});
      if (yy + 1 < kH) img.set(x, yy + 1, {30, 80, 180});
    }
    prev_y = y;
  }
  return img;
}

ReportFiles report(const std::vector<fs::path>& run_dirs, const std::vector<fs::path>& classifier_metric_files,
                   const fs::path& out_dir) {
  if (run_dirs.empty()) throw RunDirectoryError("report needs at least one completed run");
  std::vector<RunSummary> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  std::vector<std::string> metric_texts;
  for (const auto& f : classifier_metric_files) metric_texts.push_back(read_text(f));
  const std::string t2 = metric_texts.empty() ? std::string() : table2_csv(metric_texts);
  const auto t3 = table3(runs);

  ReportFiles out;
  fs::create_directories(out_dir / "curves");
  auto emit = [&](const fs::path& p, const std::string& text) {
    write_text(p, text);
    out.written.push_back(p);
  };
  emit(out_dir / "table3.csv", table3_csv(t3));
  emit(out_dir / "ranking.csv", ranking_csv(ranking(t3)));
  emit(out_dir / "table5.csv", table5_csv(table5(runs)));
  if (!t2.empty()) emit(out_dir / "table2.csv", t2);
  for (const auto& [key, members] : group(runs)) {
    std::vector<std::vector<CurvePoint>> curves;
    for (const auto* r : members) curves.push_back(r->curve);
    const fs::path p = out_dir / "curves" / (members.front()->config.cell() + ".png");
    render::save_png(p, plot_curves(curves));
    out.written.push_back(p);
  }
  return out;
}

}  // namespace rwl::exp
