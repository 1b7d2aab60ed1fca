#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rwl::exp {

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Alternative { Greater, TwoSided };
Alternative parse_alternative(const std::string& s);

struct WilcoxonResult {
  double statistic = 0.0;  // W+, rank sum of the positive differences a - b
  double p = 1.0;
  std::size_t n = 0;  // nonzero differences
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonMinPairs = 5;
inline constexpr std::size_t kWilcoxonExactMax = 20;

// Paired signed-rank test. Zero differences are dropped and tied magnitudes
// share their mean rank. Up to kWilcoxonExactMax pairs, p is exact over all
// 2^n sign assignments; beyond, a normal approximation with tie-corrected
// variance and no continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs,
                                    Alternative alt = Alternative::Greater);

// Mean ranks of `values` (1-based), ties averaged. Magnitudes closer than
// 1e-9 relative count as tied.
std::vector<double> tied_ranks(std::span<const double> values);

double mean(std::span<const double> v);
// n - 1 denominator; 0 for a single value.
double sample_std(std::span<const double> v);

}  // namespace rwl::exp
