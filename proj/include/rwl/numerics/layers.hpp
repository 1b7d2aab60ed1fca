#pragma once

#include <string>
#include <vector>

#include "rwl/numerics/ops.hpp"
#include "rwl/numerics/rng.hpp"

namespace rwl::num {

// Uniform draw in [-bound, bound] with bound = gain * sqrt(1 / fan_in).
Tensor uniform_fan_in(Shape shape, std::size_t fan_in, double gain, Rng& rng);

struct Linear {
  Var weights;  // [out, in]
  Var bias;     // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, const std::string& name, double gain = 1.0);
  Var operator()(const Var& x) const { return affine(x, weights, bias); }
  std::vector<Var> parameters() const { return {weights, bias}; }
};

struct Conv2d {
  Var kernels;  // [out, in, k, k]
  Var bias;     // [out]
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding, Rng& rng, const std::string& name,
         double gain = 1.0);
  Var operator()(const Var& x) const { return channel_bias(conv2d(x, kernels, 1, padding), bias); }
  std::vector<Var> parameters() const { return {kernels, bias}; }
};

// Fully connected stack with ReLU between layers and an identity output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<std::size_t>& widths, Rng& rng, const std::string& name);

  Var operator()(const Var& x) const;
  std::vector<Var> parameters() const;
  std::size_t input_dim() const { return layers_.front().weights.shape()[1]; }
  std::size_t output_dim() const { return layers_.back().weights.shape()[0]; }

 private:
  std::vector<Linear> layers_;
};

// Copies values (not graph identity) from `src` into `dst`.
void copy_values(std::span<const Var> dst, std::span<const Var> src);

}  // namespace rwl::num
