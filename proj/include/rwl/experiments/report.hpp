#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rwl/experiments/run.hpp"
#include "rwl/render/render.hpp"

namespace rwl::exp {

// A completed run read back from its directory.
struct RunSummary {
  std::filesystem::path dir;
  RunConfig config;
  std::vector<CurvePoint> curve;
  EvalReport eval;
  Timing timing;
};

// Throws RunDirectoryError for a missing file, an unfinished run or a
// different format version.
RunSummary load_run(const std::filesystem::path& dir);

// One (task, algorithm, reward) cell, success as a fraction.
struct Table3Row {
  std::string task, algorithm, reward;
  double success_mean = 0.0, success_std = 0.0;
  double length_mean = 0.0;
  std::size_t runs = 0;
};

std::vector<Table3Row> table3(const std::vector<RunSummary>& runs);
std::string table3_csv(const std::vector<Table3Row>& rows);
std::vector<Table3Row> parse_table3_csv(const std::string& text);
std::vector<Table3Row> read_table3_csv(const std::filesystem::path& path);

struct RankingRow {
  std::string algorithm;
  double mean = 0.0, std = 0.0;  // over cells
  std::size_t cells = 0;
};

// Best first.
std::vector<RankingRow> ranking(const std::vector<Table3Row>& rows);
std::string ranking_csv(const std::vector<RankingRow>& rows);

// (success under `a`, success under `b`) for every (task, algorithm) present
// under both reward kinds, in table order.
std::vector<std::pair<double, double>> paired_success(const std::vector<Table3Row>& rows, const std::string& a,
                                                      const std::string& b);

struct Table5Row {
  std::string task, algorithm, reward;
  double train_seconds = 0.0, test_seconds = 0.0, reward_latency_ms = 0.0;
  std::size_t runs = 0;
};
std::vector<Table5Row> table5(const std::vector<RunSummary>& runs);
std::string table5_csv(const std::vector<Table5Row>& rows);

// Means over seeds of the rows produced by clf::metrics_csv_row.
std::string table2_csv(const std::vector<std::string>& metric_csv_texts);

// Mean success-rate curve with a +-1 std band across runs.
render::Image plot_curves(const std::vector<std::vector<CurvePoint>>& runs);

struct ReportFiles {
  std::vector<std::filesystem::path> written;
};
// Writes table3.csv, table5.csv, ranking.csv, curves/<cell>.png and, when
// classifier metric files are given, table2.csv.
ReportFiles report(const std::vector<std::filesystem::path>& run_dirs,
                   const std::vector<std::filesystem::path>& classifier_metric_files,
                   const std::filesystem::path& out_dir);

}  // namespace rwl::exp
