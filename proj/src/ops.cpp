#include "cfin/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cfin {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  Shape out{};
  for (std::size_t d = 0; d < 4; ++d) {
    if (a[d] == b[d] || b[d] == 1) {
      out[d] = a[d];
    } else if (a[d] == 1) {
      out[d] = b[d];
    } else {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                       to_string(b));
    }
  }
  return out;
}

std::array<std::size_t, 4> broadcast_strides(const Shape& s, const Shape& out) {
  std::array<std::size_t, 4> st{};
  std::size_t acc = 1;
  for (int d = 3; d >= 0; --d) {
    st[static_cast<std::size_t>(d)] = (s[static_cast<std::size_t>(d)] == 1 && out[static_cast<std::size_t>(d)] != 1) ? 0 : acc;
    acc *= s[static_cast<std::size_t>(d)];
  }
  return st;
}

template <typename F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  Tensor out(out_shape);
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::size_t i = 0;
  for (std::size_t n = 0; n < out_shape[0]; ++n)
    for (std::size_t c = 0; c < out_shape[1]; ++c)
      for (std::size_t h = 0; h < out_shape[2]; ++h) {
        const std::size_t ia = n * sa[0] + c * sa[1] + h * sa[2];
        const std::size_t ib = n * sb[0] + c * sb[1] + h * sb[2];
        for (std::size_t w = 0; w < out_shape[3]; ++w, ++i) {
          out[i] = f(a[ia + w * sa[3]], b[ib + w * sb[3]]);
        }
      }
  return out;
}

// Sums g over the axes along which `target` was broadcast.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target);
  const auto st = broadcast_strides(target, g.shape());
  std::size_t i = 0;
  const Shape& gs = g.shape();
  for (std::size_t n = 0; n < gs[0]; ++n)
    for (std::size_t c = 0; c < gs[1]; ++c)
      for (std::size_t h = 0; h < gs[2]; ++h) {
        const std::size_t base = n * st[0] + c * st[1] + h * st[2];
        for (std::size_t w = 0; w < gs[3]; ++w, ++i) out[base + w * st[3]] += g[i];
      }
  return out;
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, const char* name, Fwd fwd, Deriv deriv) {
  Tensor y(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
  return make_result(std::move(y), {x}, name, [deriv](Node& self) {
    Node& xn = *self.parents[0];
    Tensor g(xn.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * deriv(xn.value[i], self.value[i]);
    xn.accumulate(g);
  });
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis > 3) throw ShapeError("axis out of range");
  AxisSplit a{1, s[axis], 1};
  for (std::size_t d = 0; d < axis; ++d) a.outer *= s[d];
  for (std::size_t d = axis + 1; d < 4; ++d) a.inner *= s[d];
  return a;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Shape out = broadcast_shape(a.shape(), b.shape(), "add");
  Tensor y = broadcast_apply(a.value(), b.value(), out, [](double p, double q) { return p + q; });
  return make_result(std::move(y), {a, b}, "add", [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(reduce_to(self.grad, p->value.shape()));
    }
  });
}

Var sub(const Var& a, const Var& b) {
  const Shape out = broadcast_shape(a.shape(), b.shape(), "sub");
  Tensor y = broadcast_apply(a.value(), b.value(), out, [](double p, double q) { return p - q; });
  return make_result(std::move(y), {a, b}, "sub", [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) an.accumulate(reduce_to(self.grad, an.value.shape()));
    if (bn.requires_grad) {
      Tensor g = reduce_to(self.grad, bn.value.shape());
      for (double& v : g.data()) v = -v;
      bn.accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const Shape out = broadcast_shape(a.shape(), b.shape(), "mul");
  Tensor y = broadcast_apply(a.value(), b.value(), out, [](double p, double q) { return p * q; });
  return make_result(std::move(y), {a, b}, "mul", [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    const Shape& os = self.value.shape();
    auto times = [](double p, double q) { return p * q; };
    if (an.requires_grad) an.accumulate(reduce_to(broadcast_apply(self.grad, bn.value, os, times), an.value.shape()));
    if (bn.requires_grad) bn.accumulate(reduce_to(broadcast_apply(self.grad, an.value, os, times), bn.value.shape()));
  });
}

Var div(const Var& a, const Var& b) {
  const Shape out = broadcast_shape(a.shape(), b.shape(), "div");
  for (double v : b.value().data()) {
    if (v == 0.0) throw NumericError("div: division by zero");
  }
  Tensor y = broadcast_apply(a.value(), b.value(), out, [](double p, double q) { return p / q; });
  return make_result(std::move(y), {a, b}, "div", [](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    const Shape& os = self.value.shape();
    if (an.requires_grad) {
      Tensor g = broadcast_apply(self.grad, bn.value, os, [](double p, double q) { return p / q; });
      an.accumulate(reduce_to(g, an.value.shape()));
    }
    if (bn.requires_grad) {
      // d(a/b)/db = -(a/b)/b
      Tensor gy = broadcast_apply(self.grad, self.value, os, [](double p, double q) { return -p * q; });
      Tensor g = broadcast_apply(gy, bn.value, os, [](double p, double q) { return p / q; });
      bn.accumulate(reduce_to(g, bn.value.shape()));
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var leaky_relu(const Var& x, double slope) {
  return unary(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(const Var& x) {
  return unary(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.n; ++j) m = std::max(m, x[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(x[base + j * s.inner] - m);
        y[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) y[base + j * s.inner] /= z;
    }
  return y;
}

Var softmax(const Var& x, std::size_t axis) {
  return make_result(softmax(x.value(), axis), {x}, "softmax", [axis](Node& self) {
    Node& xn = *self.parents[0];
    const AxisSplit s = split_axis(self.value.shape(), axis);
    Tensor g(self.value.shape());
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        double dotp = 0.0;
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t i = base + j * s.inner;
          dotp += self.grad[i] * self.value[i];
        }
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t i = base + j * s.inner;
          g[i] = self.value[i] * (self.grad[i] - dotp);
        }
      }
    xn.accumulate(g);
  });
}

Var layer_norm_channels(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Shape& xs = x.shape();
  const std::size_t C = xs[1];
  const std::size_t plane = xs[2] * xs[3];
  if (gain.value().size() != C || bias.value().size() != C) {
    throw ShapeError("layer_norm: affine params must have C=" + std::to_string(C) + " entries");
  }
  Tensor xhat(xs);
  std::vector<double> inv_std(xs[0] * plane);
  Tensor y(xs);
  const Tensor& xv = x.value();
  for (std::size_t b = 0; b < xs[0]; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t base = b * C * plane + p;
      double mean = 0.0;
      for (std::size_t c = 0; c < C; ++c) mean += xv[base + c * plane];
      mean /= static_cast<double>(C);
      double var = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double d = xv[base + c * plane] - mean;
        var += d * d;
      }
      var /= static_cast<double>(C);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[b * plane + p] = is;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = base + c * plane;
        xhat[i] = (xv[i] - mean) * is;
        y[i] = gain.value()[c] * xhat[i] + bias.value()[c];
      }
    }
  return make_result(std::move(y), {x, gain, bias}, "layer_norm",
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), C, plane](Node& self) {
    Node& xn = *self.parents[0];
    Node& gn = *self.parents[1];
    Node& bn = *self.parents[2];
    const Shape& s = self.value.shape();
    Tensor dgain(gn.value.shape()), dbias(bn.value.shape()), dx(s);
    const double invC = 1.0 / static_cast<double>(C);
    for (std::size_t b = 0; b < s[0]; ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t base = b * C * plane + p;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = base + c * plane;
          const double g = self.grad[i];
          dgain[c] += g * xhat[i];
          dbias[c] += g;
          const double dxh = g * gn.value[c];
          m1 += dxh;
          m2 += dxh * xhat[i];
        }
        m1 *= invC;
        m2 *= invC;
        const double is = inv_std[b * plane + p];
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = base + c * plane;
          dx[i] = is * (self.grad[i] * gn.value[c] - m1 - xhat[i] * m2);
        }
      }
    xn.accumulate(dx);
    gn.accumulate(dgain);
    bn.accumulate(dbias);
  });
}

Var global_avg_pool(const Var& x) {
  const Shape& s = x.shape();
  const std::size_t plane = s[2] * s[3];
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial dims");
  Tensor y({s[0], s[1], 1, 1});
  for (std::size_t i = 0; i < s[0] * s[1]; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += x.value()[i * plane + p];
    y[i] = acc / static_cast<double>(plane);
  }
  return make_result(std::move(y), {x}, "global_avg_pool", [plane](Node& self) {
    Node& xn = *self.parents[0];
    Tensor g(xn.value.shape());
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      for (std::size_t p = 0; p < plane; ++p) g[i * plane + p] = self.grad[i] * inv;
    xn.accumulate(g);
  });
}

Var adaptive_max_pool(const Var& x, std::size_t k) {
  const Shape& s = x.shape();
  if (k == 0 || s[2] < k || s[3] < k) {
    throw ShapeError("max_pool_to(" + std::to_string(k) + "): input " + to_string(s) +
                     " smaller than target");
  }
  Tensor y({s[0], s[1], k, k});
  std::vector<std::size_t> arg(y.size());
  const std::size_t H = s[2], W = s[3];
  for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t h0 = (i * H) / k, h1 = ((i + 1) * H + k - 1) / k;
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t w0 = (j * W) / k, w1 = ((j + 1) * W + k - 1) / k;
        std::size_t best = base + h0 * W + w0;
        for (std::size_t h = h0; h < h1; ++h)
          for (std::size_t w = w0; w < w1; ++w) {
            const std::size_t idx = base + h * W + w;
            if (x.value()[idx] > x.value()[best]) best = idx;
          }
        const std::size_t o = (bc * k + i) * k + j;
        y[o] = x.value()[best];
        arg[o] = best;
      }
    }
  }
  return make_result(std::move(y), {x}, "adaptive_max_pool", [arg = std::move(arg)](Node& self) {
    Node& xn = *self.parents[0];
    Tensor g(xn.value.shape());
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
    xn.accumulate(g);
  });
}

Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
  const Shape& s = x.shape();
  if (r == 0 || s[1] % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s[1]) + " not divisible by r^2=" +
                     std::to_string(r * r));
  }
  const std::size_t C = s[1] / (r * r);
  Tensor y({s[0], C, s[2] * r, s[3] * r});
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
          for (std::size_t h = 0; h < s[2]; ++h)
            for (std::size_t w = 0; w < s[3]; ++w)
              y.at(b, c, r * h + i, r * w + j) = x.at(b, c * r * r + i * r + j, h, w);
  return y;
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t r) {
  const Shape& s = x.shape();
  if (r == 0 || s[2] % r != 0 || s[3] % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial dims " + to_string(s) + " not divisible by r=" +
                     std::to_string(r));
  }
  const std::size_t H = s[2] / r, W = s[3] / r;
  Tensor y({s[0], s[1] * r * r, H, W});
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t c = 0; c < s[1]; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
              y.at(b, c * r * r + i * r + j, h, w) = x.at(b, c, r * h + i, r * w + j);
  return y;
}

Var pixel_shuffle(const Var& x, std::size_t r) {
  return make_result(pixel_shuffle(x.value(), r), {x}, "pixel_shuffle", [r](Node& self) {
    self.parents[0]->accumulate(pixel_unshuffle(self.grad, r));
  });
}

Var pixel_unshuffle(const Var& x, std::size_t r) {
  return make_result(pixel_unshuffle(x.value(), r), {x}, "pixel_unshuffle", [r](Node& self) {
    self.parents[0]->accumulate(pixel_shuffle(self.grad, r));
  });
}

Var reshape(const Var& x, const Shape& s) {
  return make_result(x.value().reshaped(s), {x}, "reshape", [](Node& self) {
    Node& xn = *self.parents[0];
    xn.accumulate(self.grad.reshaped(xn.value.shape()));
  });
}

namespace {

struct MatmulDims {
  std::size_t batch, rows, inner, cols;
};

MatmulDims matmul_dims(const Shape& a, const Shape& b, bool ta, bool tb) {
  if (a[0] != b[0] || a[1] != b[1]) {
    throw ShapeError("matmul: batch axes differ " + to_string(a) + " vs " + to_string(b));
  }
  const std::size_t ar = ta ? a[3] : a[2], ac = ta ? a[2] : a[3];
  const std::size_t br = tb ? b[3] : b[2], bc = tb ? b[2] : b[3];
  if (ac != br) throw ShapeError("matmul: inner dims differ " + to_string(a) + " vs " + to_string(b));
  return {a[0] * a[1], ar, ac, bc};
}

// out = op(A) * op(B) for every batch slice, accumulating when `accumulate`.
void batched_gemm(const Tensor& A, bool ta, const Tensor& B, bool tb, Tensor& out, bool accumulate) {
  const MatmulDims d = matmul_dims(A.shape(), B.shape(), ta, tb);
  const std::size_t asz = A.height() * A.width(), bsz = B.height() * B.width();
  const std::size_t osz = d.rows * d.cols;
  for (std::size_t i = 0; i < d.batch; ++i) {
    ConstMapMat am(A.data().data() + i * asz, A.height(), A.width());
    ConstMapMat bm(B.data().data() + i * bsz, B.height(), B.width());
    MapMat om(out.data().data() + i * osz, d.rows, d.cols);
    if (!accumulate) om.setZero();
    if (!ta && !tb) om.noalias() += am * bm;
    else if (ta && !tb) om.noalias() += am.transpose() * bm;
    else if (!ta && tb) om.noalias() += am * bm.transpose();
    else om.noalias() += am.transpose() * bm.transpose();
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  const MatmulDims d = matmul_dims(a.shape(), b.shape(), transpose_a, transpose_b);
  Tensor y({a.shape()[0], a.shape()[1], d.rows, d.cols});
  batched_gemm(a.value(), transpose_a, b.value(), transpose_b, y, false);
  return make_result(std::move(y), {a, b}, "matmul", [transpose_a, transpose_b](Node& self) {
    Node& an = *self.parents[0];
    Node& bn = *self.parents[1];
    if (an.requires_grad) {
      Tensor g(an.value.shape());
      // C = op(A) op(B): dop(A) = dC op(B)^T
      if (!transpose_a) batched_gemm(self.grad, false, bn.value, !transpose_b, g, false);
      else batched_gemm(bn.value, transpose_b, self.grad, true, g, false);
      an.accumulate(g);
    }
    if (bn.requires_grad) {
      Tensor g(bn.value.shape());
      // dop(B) = op(A)^T dC
      if (!transpose_b) batched_gemm(an.value, !transpose_a, self.grad, false, g, false);
      else batched_gemm(self.grad, true, an.value, transpose_a, g, false);
      bn.accumulate(g);
    }
  });
}

Var slice_batch(const Var& x, std::size_t b) {
  const Shape& s = x.shape();
  if (b >= s[0]) throw ShapeError("slice_batch: index out of range");
  const std::size_t n = s[1] * s[2] * s[3];
  std::vector<double> data(x.value().data().begin() + static_cast<std::ptrdiff_t>(b * n),
                           x.value().data().begin() + static_cast<std::ptrdiff_t>((b + 1) * n));
  return make_result(Tensor({1, s[1], s[2], s[3]}, std::move(data)), {x}, "slice_batch",
                     [b, n](Node& self) {
    Node& xn = *self.parents[0];
    Tensor g(xn.value.shape());
    std::copy(self.grad.data().begin(), self.grad.data().end(), g.data().begin() + static_cast<std::ptrdiff_t>(b * n));
    xn.accumulate(g);
  });
}

Var concat_batch(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no inputs");
  Shape s = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps[1] != s[1] || ps[2] != s[2] || ps[3] != s[3]) {
      throw ShapeError("concat_batch: mismatched part " + to_string(ps));
    }
    total += ps[0];
  }
  s[0] = total;
  std::vector<double> data;
  data.reserve(numel(s));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(data.size());
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  return make_result(Tensor(s, std::move(data)), parts, "concat_batch",
                     [offsets = std::move(offsets)](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& pn = *self.parents[i];
      if (!pn.requires_grad) continue;
      std::vector<double> g(self.grad.data().begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                            self.grad.data().begin() + static_cast<std::ptrdiff_t>(offsets[i] + pn.value.size()));
      pn.accumulate(Tensor(pn.value.shape(), std::move(g)));
    }
  });
}

Var weight_norm(const Var& v, const Var& g) {
  const Shape& vs = v.shape();
  const std::size_t C = vs[0];
  const std::size_t n = vs[1] * vs[2] * vs[3];
  if (g.value().size() != C) throw ShapeError("weight_norm: gain must have C_out entries");
  std::vector<double> norms(C);
  Tensor w(vs);
  for (std::size_t o = 0; o < C; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v.value()[o * n + i] * v.value()[o * n + i];
    if (s <= 0.0) throw NumericError("weight_norm: direction has zero norm for output channel " + std::to_string(o));
    norms[o] = std::sqrt(s);
    const double f = g.value()[o] / norms[o];
    for (std::size_t i = 0; i < n; ++i) w[o * n + i] = f * v.value()[o * n + i];
  }
  return make_result(std::move(w), {v, g}, "weight_norm", [norms = std::move(norms), C, n](Node& self) {
    Node& vn = *self.parents[0];
    Node& gn = *self.parents[1];
    Tensor dv(vn.value.shape()), dg(gn.value.shape());
    for (std::size_t o = 0; o < C; ++o) {
      double proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += self.grad[o * n + i] * vn.value[o * n + i];
      const double nrm = norms[o];
      dg[o] = proj / nrm;
      const double f = gn.value[o] / nrm;
      for (std::size_t i = 0; i < n; ++i) {
        dv[o * n + i] = f * (self.grad[o * n + i] - proj * vn.value[o * n + i] / (nrm * nrm));
      }
    }
    if (vn.requires_grad) vn.accumulate(dv);
    if (gn.requires_grad) gn.accumulate(dg);
  });
}

Var sum_all(const Var& x) {
  return make_result(Tensor({1, 1, 1, 1}, sum(x.value())), {x}, "sum_all", [](Node& self) {
    Node& xn = *self.parents[0];
    xn.accumulate(Tensor(xn.value.shape(), self.grad[0]));
  });
}

Var mean_all(const Var& x) {
  const auto n = static_cast<double>(x.value().size());
  return scale(sum_all(x), 1.0 / n);
}

Var l1_loss(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  const std::size_t n = pred.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(pred.value()[i] - target.value()[i]);
  return make_result(Tensor({1, 1, 1, 1}, acc / static_cast<double>(n)), {pred, target}, "l1_loss",
                     [n](Node& self) {
    Node& pn = *self.parents[0];
    Node& tn = *self.parents[1];
    Tensor g(pn.value.shape());
    const double s = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = pn.value[i] - tn.value[i];
      g[i] = d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
    }
    if (pn.requires_grad) pn.accumulate(g);
    if (tn.requires_grad) {
      for (double& v : g.data()) v = -v;
      tn.accumulate(g);
    }
  });
}

}  // namespace cfin
