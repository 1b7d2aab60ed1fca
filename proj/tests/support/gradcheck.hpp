#pragma once

// Central finite-difference oracle used by the gradient tests. It only reads
// and perturbs leaf values, so it stays independent of the backward pass.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rwl/numerics/graph.hpp"
#include "rwl/numerics/ops.hpp"
#include "rwl/numerics/rng.hpp"

namespace rwl::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // probes skipped by `skip_kinks`
};

inline double relative_error(double analytic, double numeric) {
  // Floor keeps round-off on near-zero gradients from dominating.
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// Checks d f / d leaves. `max_per_leaf` limits how many entries are probed
// (chosen uniformly at random) so large tensors stay cheap.
inline GradCheckResult grad_check(const std::function<num::Var()>& f, const std::vector<num::Var>& leaves,
                                  double h = 1e-5, std::size_t max_per_leaf = 0, std::uint64_t seed = 1,
                                  bool skip_kinks = false) {
  num::zero_grad(leaves);
  num::backward(f());
  std::vector<num::Tensor> analytic;
  for (const auto& l : leaves) analytic.push_back(l.node()->grad_buffer());
  GradCheckResult res;
  num::Rng rng(seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    num::Tensor& v = leaves[li].node()->value;
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_leaf && idx.size() > max_per_leaf) {
      rng.shuffle(idx.begin(), idx.end());
      idx.resize(max_per_leaf);
    }
    for (std::size_t i : idx) {
      const double orig = v[i];
      auto central = [&](double step) {
        v[i] = orig + step;
        const double fp = f().item();
        v[i] = orig - step;
        const double fm = f().item();
        v[i] = orig;
        return (fp - fm) / (2 * step);
      };
      const double numeric = central(h);
      // A ReLU or max-pool switch inside [x - h, x + h] shows up as
      // disagreement between two step sizes.
      if (skip_kinks && relative_error(numeric, central(h / 10)) > 1e-3) {
        ++res.kinks;
        continue;
      }
      res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[li][i], numeric));
      ++res.checked;
    }
  }
  return res;
}

inline num::Tensor random_tensor(num::Shape shape, num::Rng& rng, double lo = -1.0, double hi = 1.0) {
  num::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Scalar probe: sum(out * w) with fixed random weights w.
inline num::Var project(const num::Var& out, std::uint64_t seed = 99) {
  num::Rng rng(seed);
  return num::sum(num::mul(out, num::constant(random_tensor(out.shape(), rng))));
}

}  // namespace rwl::testing
