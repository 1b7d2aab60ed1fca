#include "rwl/numerics/layers.hpp"

#include <cmath>

namespace rwl::num {

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, const std::string& name, double gain)
    : weights(parameter(uniform_fan_in({out, in}, in, gain, rng), name + ".weight")),
      bias(parameter(uniform_fan_in({out}, in, gain, rng), name + ".bias")) {}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t pad, Rng& rng,
               const std::string& name, double gain)
    : kernels(parameter(uniform_fan_in({out, in, kernel, kernel}, in * kernel * kernel, gain, rng), name + ".weight")),
      bias(parameter(Tensor(Shape{out}), name + ".bias")),
      padding(pad) {}

Mlp::Mlp(const std::vector<std::size_t>& widths, Rng& rng, const std::string& name) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.emplace_back(widths[i], widths[i + 1], rng, name + ".l" + std::to_string(i));
  }
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

std::vector<Var> Mlp::parameters() const {
  std::vector<Var> out;
  for (const auto& l : layers_) {
    out.push_back(l.weights);
    out.push_back(l.bias);
  }
  return out;
}

void copy_values(std::span<const Var> dst, std::span<const Var> src) {
  if (dst.size() != src.size()) throw ShapeError("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) throw ShapeError("copy_values: shape mismatch for " + dst[i].name());
    dst[i].node()->value = src[i].value();
  }
}

}  // namespace rwl::num
