#include "rwl/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

namespace rwl::num {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

bool wants_grad(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }
Tensor& in_grad(Node& n, std::size_t i) { return n.inputs[i]->grad_buffer(); }
const Tensor& in_value(const Node& n, std::size_t i) { return n.inputs[i]->value; }

enum class Bcast { Same, AOne, BOne };

Bcast binary_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::Same;
  if (a.size() == 1) return Bcast::AOne;
  if (b.size() == 1) return Bcast::BOne;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

// Applies f(a_i, b_i) with broadcasting; dfa/dfb give local partials.
template <typename F, typename DA, typename DB>
Var binary(const Var& a, const Var& b, const char* op, F f, DA dfa, DB dfb) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast layout = binary_layout(av, bv, op);
  const Tensor& big = layout == Bcast::AOne ? bv : av;
  Tensor out(big.shape());
  const std::size_t n = out.size();
  const std::size_t sa = layout == Bcast::AOne ? 0 : 1;
  const std::size_t sb = layout == Bcast::BOne ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i * sa], bv[i * sb]);
  return make_node(
      std::move(out), {a, b},
      [sa, sb, n, dfa, dfb](Node& self) {
        const Tensor& x = in_value(self, 0);
        const Tensor& y = in_value(self, 1);
        if (wants_grad(self, 0)) {
          Tensor& g = in_grad(self, 0);
          for (std::size_t i = 0; i < n; ++i) g[i * sa] += self.grad[i] * dfa(x[i * sa], y[i * sb]);
        }
        if (wants_grad(self, 1)) {
          Tensor& g = in_grad(self, 1);
          for (std::size_t i = 0; i < n; ++i) g[i * sb] += self.grad[i] * dfb(x[i * sa], y[i * sb]);
        }
      },
      op);
}

// Elementwise unary op whose derivative is expressed through input x and output y.
template <typename F, typename D>
Var unary(const Var& a, const char* op, F f, D df) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_node(
      std::move(out), {a},
      [df](Node& self) {
        const Tensor& x = in_value(self, 0);
        Tensor& g = in_grad(self, 0);
        for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[i] * df(x[i], self.value[i]);
      },
      op);
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct ConvGeometry {
  std::size_t n, c, h, w, k, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t out_pixels() const { return ho * wo; }
};

void im2col(const double* img, const ConvGeometry& g, double* col) {
  const std::size_t hw = g.out_pixels();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = col + ((ch * g.kh + i) * g.kw + j) * hw;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = img + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const std::size_t hw = g.out_pixels();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = col + ((ch * g.kh + i) * g.kw + j) * hw;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = img + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Splits a rank-3 or rank-4 image tensor into (N, C, H, W).
std::array<std::size_t, 4> image_dims(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  throw ShapeError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + shape_str(t.shape()));
}

Shape image_shape(bool batched, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return batched ? Shape{n, c, h, w} : Shape{c, h, w};
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

// Ties route the gradient to the first operand.
Var minimum(const Var& a, const Var& b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return std::min(x, y); },
      [](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
}

Var scale(const Var& a, double s) {
  return unary(
      a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
  return unary(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, "sigmoid", sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var activation(const Var& a, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::ReLU:
      return relu(a);
    case ActivationKind::Tanh:
      return tanh(a);
    case ActivationKind::Sigmoid:
      return sigmoid(a);
  }
  throw std::invalid_argument("activation: unknown kind");
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_node(
      Tensor::scalar(s), {a},
      [](Node& self) {
        Tensor& g = in_grad(self, 0);
        const double up = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
      },
      "sum");
}

Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var sum_cols(const Var& a) {
  const Tensor& v = a.value();
  if (v.rank() != 2) throw ShapeError("sum_cols: expected [B,n], got " + shape_str(v.shape()));
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  Tensor out(Shape{rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c];
    out[r] = s;
  }
  return make_node(
      std::move(out), {a},
      [rows, cols](Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[r];
        }
      },
      "sum_cols");
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0)) {
    throw ShapeError("concat_cols: incompatible shapes " + shape_str(av.shape()) + " and " + shape_str(bv.shape()));
  }
  const std::size_t rows = av.dim(0), na = av.dim(1), nb = bv.dim(1);
  Tensor out(Shape{rows, na + nb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.raw() + r * na, na, out.raw() + r * (na + nb));
    std::copy_n(bv.raw() + r * nb, nb, out.raw() + r * (na + nb) + na);
  }
  return make_node(
      std::move(out), {a, b},
      [rows, na, nb](Node& self) {
        const std::size_t n = na + nb;
        if (wants_grad(self, 0)) {
          Tensor& g = in_grad(self, 0);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < na; ++c) g[r * na + c] += self.grad[r * n + c];
        }
        if (wants_grad(self, 1)) {
          Tensor& g = in_grad(self, 1);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < nb; ++c) g[r * nb + c] += self.grad[r * n + na + c];
        }
      },
      "concat_cols");
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& v = a.value();
  if (v.rank() != 2 || begin >= end || end > v.dim(1)) {
    throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") for " +
                     shape_str(v.shape()));
  }
  const std::size_t rows = v.dim(0), cols = v.dim(1), width = end - begin;
  Tensor out(Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.raw() + r * cols + begin, width, out.raw() + r * width);
  return make_node(
      std::move(out), {a},
      [rows, cols, width, begin](Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < width; ++c) g[r * cols + begin + c] += self.grad[r * width + c];
      },
      "slice_cols");
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_node(
      std::move(out), {a},
      [](Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

Var affine(const Var& x, const Var& weights, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  const Tensor& bv = bias.value();
  if (wv.rank() != 2 || bv.rank() != 1 || bv.dim(0) != wv.dim(0) || (xv.rank() != 1 && xv.rank() != 2) ||
      xv.shape().back() != wv.dim(1)) {
    throw ShapeError("affine: incompatible shapes x=" + shape_str(xv.shape()) + " w=" + shape_str(wv.shape()) +
                     " b=" + shape_str(bv.shape()));
  }
  const bool batched = xv.rank() == 2;
  const std::size_t rows = batched ? xv.dim(0) : 1;
  const std::size_t in = wv.dim(1), out_dim = wv.dim(0);
  Tensor out(batched ? Shape{rows, out_dim} : Shape{out_dim});
  {
    CMapR X(xv.raw(), rows, in);
    CMapR W(wv.raw(), out_dim, in);
    MapR Y(out.raw(), rows, out_dim);
    Y.noalias() = X * W.transpose();
    Eigen::Map<const Eigen::RowVectorXd> B(bv.raw(), out_dim);
    Y.rowwise() += B;
  }
  return make_node(
      std::move(out), {x, weights, bias},
      [rows, in, out_dim](Node& self) {
        CMapR dY(self.grad.raw(), rows, out_dim);
        if (wants_grad(self, 0)) {
          MapR dX(in_grad(self, 0).raw(), rows, in);
          dX.noalias() += dY * CMapR(in_value(self, 1).raw(), out_dim, in);
        }
        if (wants_grad(self, 1)) {
          MapR dW(in_grad(self, 1).raw(), out_dim, in);
          dW.noalias() += dY.transpose() * CMapR(in_value(self, 0).raw(), rows, in);
        }
        if (wants_grad(self, 2)) {
          Eigen::Map<Eigen::RowVectorXd> dB(in_grad(self, 2).raw(), out_dim);
          dB += dY.colwise().sum();
        }
      },
      "affine");
}

Var conv2d(const Var& input, const Var& kernels, std::size_t stride, std::size_t padding) {
  const Tensor& xv = input.value();
  const Tensor& kv = kernels.value();
  const auto [n, c, h, w] = image_dims(xv, "conv2d");
  if (kv.rank() != 4 || kv.dim(1) != c) {
    throw ShapeError("conv2d: kernels " + shape_str(kv.shape()) + " incompatible with input " + shape_str(xv.shape()));
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t kh = kv.dim(2), kw = kv.dim(3);
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_str(kv.shape()) + " larger than padded input " +
                     shape_str(xv.shape()));
  }
  const ConvGeometry g{n, c, h, w, kv.dim(0), kh, kw, stride, padding, (h + 2 * padding - kh) / stride + 1,
                       (w + 2 * padding - kw) / stride + 1};
  const bool batched = xv.rank() == 4;
  Tensor out(image_shape(batched, n, g.k, g.ho, g.wo));
  Storage col(g.patch() * g.out_pixels());
  CMapR K(kv.raw(), g.k, g.patch());
  for (std::size_t i = 0; i < n; ++i) {
    im2col(xv.raw() + i * c * h * w, g, col.data());
    MapR Y(out.raw() + i * g.k * g.out_pixels(), g.k, g.out_pixels());
    Y.noalias() = K * CMapR(col.data(), g.patch(), g.out_pixels());
  }
  return make_node(
      std::move(out), {input, kernels},
      [g](Node& self) {
        const Tensor& x = in_value(self, 0);
        const Tensor& kt = in_value(self, 1);
        CMapR K(kt.raw(), g.k, g.patch());
        Storage col(g.patch() * g.out_pixels());
        const bool gx = wants_grad(self, 0), gk = wants_grad(self, 1);
        double* dx = gx ? in_grad(self, 0).raw() : nullptr;
        double* dk = gk ? in_grad(self, 1).raw() : nullptr;
        const std::size_t img = g.c * g.h * g.w;
        for (std::size_t i = 0; i < g.n; ++i) {
          CMapR dY(self.grad.raw() + i * g.k * g.out_pixels(), g.k, g.out_pixels());
          if (gk) {
            im2col(x.raw() + i * img, g, col.data());
            MapR dK(dk, g.k, g.patch());
            dK.noalias() += dY * CMapR(col.data(), g.patch(), g.out_pixels()).transpose();
          }
          if (gx) {
            MapR dcol(col.data(), g.patch(), g.out_pixels());
            dcol.noalias() = K.transpose() * dY;
            col2im_add(col.data(), g, dx + i * img);
          }
        }
      },
      "conv2d");
}

Var channel_bias(const Var& input, const Var& bias) {
  const Tensor& xv = input.value();
  const auto [n, c, h, w] = image_dims(xv, "channel_bias");
  if (bias.value().rank() != 1 || bias.value().dim(0) != c) {
    throw ShapeError("channel_bias: bias " + shape_str(bias.value().shape()) + " for input " + shape_str(xv.shape()));
  }
  const std::size_t plane = h * w;
  Tensor out = xv;
  const Tensor& bv = bias.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* p = out.raw() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] += bv[ch];
    }
  return make_node(
      std::move(out), {input, bias},
      [n, c, plane](Node& self) {
        if (wants_grad(self, 0)) {
          Tensor& g = in_grad(self, 0);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
          Tensor& g = in_grad(self, 1);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const double* p = self.grad.raw() + (i * c + ch) * plane;
              double s = 0.0;
              for (std::size_t k = 0; k < plane; ++k) s += p[k];
              g[ch] += s;
            }
        }
      },
      "channel_bias");
}

Var pool2d(const Var& input, PoolMode mode, std::size_t window) {
  const Tensor& xv = input.value();
  const auto [n, c, h, w] = image_dims(xv, "pool2d");
  const bool batched = xv.rank() == 4;
  const std::size_t plane = h * w;
  if (mode == PoolMode::GlobalAvg) {
    Tensor out(image_shape(batched, n, c, 1, 1));
    for (std::size_t p = 0; p < n * c; ++p) {
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += xv[p * plane + k];
      out[p] = s / static_cast<double>(plane);
    }
    return make_node(
        std::move(out), {input},
        [n, c, plane](Node& self) {
          Tensor& g = in_grad(self, 0);
          const double inv = 1.0 / static_cast<double>(plane);
          for (std::size_t p = 0; p < n * c; ++p) {
            const double up = self.grad[p] * inv;
            for (std::size_t k = 0; k < plane; ++k) g[p * plane + k] += up;
          }
        },
        "global_avg_pool");
  }
  if (window < 1 || h % window != 0 || w % window != 0) {
    throw ShapeError("pool2d: window " + std::to_string(window) + " does not divide spatial extents of " +
                     shape_str(xv.shape()));
  }
  const std::size_t ho = h / window, wo = w / window;
  Tensor out(image_shape(batched, n, c, ho, wo));
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t p = 0; p < n * c; ++p) {
    const double* src = xv.raw() + p * plane;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (oy * window) * w + ox * window;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = (oy * window + dy) * w + ox * window + dx;
            if (src[idx] > src[best]) best = idx;
          }
        const std::size_t o = p * ho * wo + oy * wo + ox;
        out[o] = src[best];
        (*argmax)[o] = p * plane + best;
      }
  }
  return make_node(
      std::move(out), {input},
      [argmax](Node& self) {
        Tensor& g = in_grad(self, 0);
        for (std::size_t o = 0; o < argmax->size(); ++o) g[(*argmax)[o]] += self.grad[o];
      },
      "max_pool2d");
}

Var loss(const Var& prediction, const Tensor& target, LossKind kind) {
  const Tensor& p = prediction.value();
  if (p.size() != target.size()) {
    throw ShapeError("loss: prediction " + shape_str(p.shape()) + " vs target " + shape_str(target.shape()));
  }
  if (p.size() == 0) throw ShapeError("loss: empty prediction");
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double total = 0.0;
  if (kind == LossKind::BinaryCrossEntropy) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double y = target[i];
      if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("loss: BCE target outside [0,1]");
      const double pc = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
      total -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
    }
    total = std::max(0.0, total * inv_n);
    return make_node(
        Tensor::scalar(total), {prediction},
        [target, inv_n](Node& self) {
          const Tensor& pv = in_value(self, 0);
          Tensor& g = in_grad(self, 0);
          const double up = self.grad[0] * inv_n;
          for (std::size_t i = 0; i < pv.size(); ++i) {
            if (pv[i] < kBceEpsilon || pv[i] > 1.0 - kBceEpsilon) continue;
            g[i] += up * (pv[i] - target[i]) / (pv[i] * (1.0 - pv[i]));
          }
        },
        "bce");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - target[i];
    total += d * d;
  }
  return make_node(
      Tensor::scalar(total * inv_n), {prediction},
      [target, inv_n](Node& self) {
        const Tensor& pv = in_value(self, 0);
        Tensor& g = in_grad(self, 0);
        const double up = 2.0 * self.grad[0] * inv_n;
        for (std::size_t i = 0; i < pv.size(); ++i) g[i] += up * (pv[i] - target[i]);
      },
      "mse");
}

}  // namespace rwl::num
