#pragma once

#include "rwl/numerics/graph.hpp"

namespace rwl::num {

enum class ActivationKind { ReLU, Tanh, Sigmoid };
enum class PoolMode { Max, GlobalAvg };
enum class LossKind { BinaryCrossEntropy, MeanSquaredError };

inline constexpr double kBceEpsilon = 1e-7;

// Elementwise binary ops accept equal shapes or a one-element operand, which
// is broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
// Gradient passes only where lo <= a <= hi.
Var clamp(const Var& a, double lo, double hi);
Var activation(const Var& a, ActivationKind kind);

Var sum(const Var& a);
Var mean(const Var& a);
// [B, n] -> [B, 1]
Var sum_cols(const Var& a);
// [B, n] ++ [B, m] -> [B, n + m]
Var concat_cols(const Var& a, const Var& b);
// Columns [begin, end) of a [B, n] tensor.
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var reshape(const Var& a, Shape shape);

// x: [n] or [B, n]; weights: [m, n]; bias: [m].
Var affine(const Var& x, const Var& weights, const Var& bias);

// input: [C, H, W] or [N, C, H, W]; kernels: [K, C, kh, kw].
Var conv2d(const Var& input, const Var& kernels, std::size_t stride, std::size_t padding);
// Adds bias[k] to every pixel of channel k.
Var channel_bias(const Var& input, const Var& bias);
// Max mode uses non-overlapping windows and needs extents divisible by
// `window`. GlobalAvg ignores `window` and yields [.., C, 1, 1].
Var pool2d(const Var& input, PoolMode mode, std::size_t window);

// Mean over elements. BCE clamps predictions into [eps, 1 - eps].
Var loss(const Var& prediction, const Tensor& target, LossKind kind);

}  // namespace rwl::num
