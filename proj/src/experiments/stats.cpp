#include "rwl/experiments/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rwl::exp {

Alternative parse_alternative(const std::string& s) {
  if (s == "greater") return Alternative::Greater;
  if (s == "two-sided") return Alternative::TwoSided;
  throw StatsError("unknown alternative '" + s + "' (greater | two-sided)");
}

std::vector<double> tied_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    const double v = values[order[i]];
    while (j < n && values[order[j]] - v <= 1e-9 * std::max(1.0, std::abs(v))) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs, Alternative alt) {
  std::vector<double> diff;
  for (const auto& [a, b] : pairs) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw StatsError("wilcoxon: non-finite value");
    if (a != b) diff.push_back(a - b);
  }
  const std::size_t n = diff.size();
  if (n < kWilcoxonMinPairs) {
    throw StatsError("wilcoxon: " + std::to_string(n) + " nonzero differences, need at least " +
                     std::to_string(kWilcoxonMinPairs));
  }
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(diff[i]);
  const std::vector<double> ranks = tied_ranks(mag);

  WilcoxonResult res;
  res.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (diff[i] > 0) res.statistic += ranks[i];
  }

  double p_greater = 0.0, p_less = 0.0;
  if (n <= kWilcoxonExactMax) {
    res.exact = true;
    // Doubled mean ranks are integers; count sign assignments per rank sum.
    std::vector<int> r2(n);
    for (std::size_t i = 0; i < n; ++i) r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
    const int total = std::accumulate(r2.begin(), r2.end(), 0);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int r : r2) {
      for (int s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
      reach += r;
    }
    const int w2 = static_cast<int>(std::lround(2.0 * res.statistic));
    double ge = 0.0, le = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (s >= w2) ge += count[static_cast<std::size_t>(s)];
      if (s <= w2) le += count[static_cast<std::size_t>(s)];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    p_greater = ge / all;
    p_less = le / all;
  } else {
    const double nd = static_cast<double>(n);
    double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
    std::vector<double> sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      var -= (t * t * t - t) / 48.0;
      i = j;
    }
    const double z = (res.statistic - nd * (nd + 1.0) / 4.0) / std::sqrt(var);
    p_greater = 0.5 * std::erfc(z / std::sqrt(2.0));
    p_less = 0.5 * std::erfc(-z / std::sqrt(2.0));
  }
  res.p = alt == Alternative::Greater ? p_greater : std::min(1.0, 2.0 * std::min(p_greater, p_less));
  return res;
}

double mean(std::span<const double> v) {
  if (v.empty()) throw StatsError("mean of an empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  const double m = mean(v);
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace rwl::exp
