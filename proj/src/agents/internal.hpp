#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "rwl/agents/agents.hpp"

namespace rwl::agents::detail {

inline num::Tensor row(std::span<const double> v) { return num::Tensor({1, v.size()}, {v.begin(), v.end()}); }

inline num::Tensor normal_tensor(num::Shape shape, num::Rng& rng) {
  num::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

inline std::vector<double> clip_unit(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x = std::clamp(x, -1.0, 1.0);
  return out;
}

inline std::vector<num::Var> cat(std::vector<num::Var> a, const std::vector<num::Var>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// FNV-1a over the batch contents, quoted in divergence errors.
inline std::uint64_t fingerprint(const Batch& b) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const num::Tensor* t : {&b.obs, &b.action, &b.reward, &b.next_obs, &b.done}) {
    for (double v : t->data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int k = 0; k < 8; ++k) {
        h ^= (bits >> (8 * k)) & 0xff;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

inline void require_finite(const Diagnostics& d, const std::string& algo, std::uint64_t fp) {
  for (const auto& [name, v] : d) {
    if (!std::isfinite(v)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
      throw TrainingDivergedError(algo + " update produced non-finite " + name + " (batch fingerprint " + buf + ")");
    }
  }
}

inline std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

// Target network: same shapes as `online`, values copied.
inline num::Mlp clone_as(const num::Mlp& online, const std::vector<std::size_t>& w, num::Rng& rng,
                         const std::string& name) {
  num::Mlp t(w, rng, name);
  const auto dst = t.parameters();
  const auto src = online.parameters();
  num::copy_values(dst, src);
  return t;
}

}  // namespace rwl::agents::detail
