#include <Eigen/Core>

#include "cfin/ops.hpp"

#ifdef CFIN_USE_OPENMP
#include <omp.h>
#endif

namespace cfin {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Window {
  std::size_t channels, height, width;  // image side
  std::size_t k, stride, pad;
  std::size_t out_h, out_w;             // column side
};

// col has shape (channels*k*k, out_h*out_w).
void im2col(const double* img, const Window& win, double* col) {
  const std::size_t plane = win.out_h * win.out_w;
  for (std::size_t c = 0; c < win.channels; ++c) {
    for (std::size_t ki = 0; ki < win.k; ++ki) {
      for (std::size_t kj = 0; kj < win.k; ++kj) {
        double* row = col + ((c * win.k + ki) * win.k + kj) * plane;
        for (std::size_t oh = 0; oh < win.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * win.stride + ki) -
                          static_cast<std::ptrdiff_t>(win.pad);
          double* dst = row + oh * win.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(win.height)) {
            std::fill(dst, dst + win.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * win.height + static_cast<std::size_t>(ih)) * win.width;
          for (std::size_t ow = 0; ow < win.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * win.stride + kj) -
                            static_cast<std::ptrdiff_t>(win.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(win.width))
                          ? 0.0
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Scatter-adds col back into img (adjoint of im2col).
void col2im(const double* col, const Window& win, double* img) {
  const std::size_t plane = win.out_h * win.out_w;
  for (std::size_t c = 0; c < win.channels; ++c) {
    for (std::size_t ki = 0; ki < win.k; ++ki) {
      for (std::size_t kj = 0; kj < win.k; ++kj) {
        const double* row = col + ((c * win.k + ki) * win.k + kj) * plane;
        for (std::size_t oh = 0; oh < win.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * win.stride + ki) -
                          static_cast<std::ptrdiff_t>(win.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(win.height)) continue;
          double* dst = img + (c * win.height + static_cast<std::size_t>(ih)) * win.width;
          const double* src = row + oh * win.out_w;
          for (std::size_t ow = 0; ow < win.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * win.stride + kj) -
                            static_cast<std::ptrdiff_t>(win.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(win.width)) {
              dst[static_cast<std::size_t>(iw)] += src[ow];
            }
          }
        }
      }
    }
  }
}

void check_groups(std::size_t c_in, std::size_t c_out, std::size_t groups) {
  if (groups == 0 || c_in % groups != 0 || c_out % groups != 0) {
    throw ShapeError("grouping: C_in=" + std::to_string(c_in) + " C_out=" + std::to_string(c_out) +
                     " not divisible by groups=" + std::to_string(groups));
  }
}

void add_bias(Tensor& out, const Tensor& bias) {
  const std::size_t plane = out.height() * out.width();
  if (bias.size() != out.channels()) throw ShapeError("bias length does not match C_out");
  for (std::size_t b = 0; b < out.batch(); ++b)
    for (std::size_t c = 0; c < out.channels(); ++c) {
      double* p = &out.at(b, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) p[i] += bias[c];
    }
}

Tensor bias_grad(const Tensor& gout) {
  Tensor gb({gout.channels(), 1, 1, 1});
  const std::size_t plane = gout.height() * gout.width();
  for (std::size_t b = 0; b < gout.batch(); ++b)
    for (std::size_t c = 0; c < gout.channels(); ++c) {
      const double* p = gout.data().data() + gout.index(b, c, 0, 0);
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      gb[c] += s;
    }
  return gb;
}

// Shared geometry for one conv: the "image" side is x, the "column" side is y.
struct ConvPlan {
  std::size_t batch, c_in, c_out, groups, cg_in, cg_out, k;
  Window win;  // image = input x, columns = output y
  std::size_t rows() const { return cg_in * k * k; }
  std::size_t plane() const { return win.out_h * win.out_w; }
};

ConvPlan plan_conv(const Shape& x, const Shape& w, const ConvGeom& g) {
  if (w[2] != w[3]) throw ShapeError("conv2d: kernel must be square");
  if (g.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t c_out = w[0];
  const std::size_t c_in = x[1];
  check_groups(c_in, c_out, g.groups);
  if (w[1] * g.groups != c_in) {
    throw ShapeError("conv2d: input channels " + std::to_string(c_in) + " do not match kernel " +
                     to_string(w) + " with groups=" + std::to_string(g.groups));
  }
  const std::size_t k = w[2];
  if (x[2] + 2 * g.pad < k || x[3] + 2 * g.pad < k) {
    throw ShapeError("conv2d: spatial dims " + to_string(x) + " too small for kernel " +
                     std::to_string(k));
  }
  ConvPlan p{};
  p.batch = x[0];
  p.c_in = c_in;
  p.c_out = c_out;
  p.groups = g.groups;
  p.cg_in = c_in / g.groups;
  p.cg_out = c_out / g.groups;
  p.k = k;
  p.win = Window{p.cg_in, x[2], x[3], k, g.stride, g.pad,
                 (x[2] + 2 * g.pad - k) / g.stride + 1, (x[3] + 2 * g.pad - k) / g.stride + 1};
  return p;
}

// For deconv the kernel is (C_in, C_out/groups, k, k) and the *output* is the image side.
ConvPlan plan_deconv(const Shape& x, const Shape& w, const ConvGeom& g) {
  if (w[2] != w[3]) throw ShapeError("deconv2d: kernel must be square");
  if (g.stride == 0) throw ShapeError("deconv2d: stride must be positive");
  const std::size_t c_in = x[1];
  if (w[0] != c_in) {
    throw ShapeError("deconv2d: input channels " + std::to_string(c_in) + " do not match kernel " +
                     to_string(w));
  }
  const std::size_t c_out = w[1] * g.groups;
  check_groups(c_in, c_out, g.groups);
  const std::size_t k = w[2];
  const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>((x[2] - 1) * g.stride + k) -
                            static_cast<std::ptrdiff_t>(2 * g.pad);
  const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>((x[3] - 1) * g.stride + k) -
                            static_cast<std::ptrdiff_t>(2 * g.pad);
  if (x[2] == 0 || x[3] == 0 || oh <= 0 || ow <= 0) {
    throw ShapeError("deconv2d: input " + to_string(x) + " yields an empty output");
  }
  ConvPlan p{};
  p.batch = x[0];
  p.c_in = c_in;
  p.c_out = c_out;
  p.groups = g.groups;
  p.cg_in = c_in / g.groups;
  p.cg_out = c_out / g.groups;
  p.k = k;
  p.win = Window{p.cg_out, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), k,
                 g.stride, g.pad, x[2], x[3]};
  return p;
}

// y = conv(x, w)
void conv_forward(const ConvPlan& p, const double* x, const double* w, double* y) {
  const std::size_t in_img = p.c_in * p.win.height * p.win.width;
  const std::size_t out_img = p.c_out * p.plane();
#ifdef CFIN_USE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(p.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<double> col(p.rows() * p.plane());
    for (std::size_t gi = 0; gi < p.groups; ++gi) {
      im2col(x + b * in_img + gi * p.cg_in * p.win.height * p.win.width, p.win, col.data());
      ConstMapMat wm(w + gi * p.cg_out * p.rows(), p.cg_out, p.rows());
      ConstMapMat cm(col.data(), p.rows(), p.plane());
      MapMat ym(y + b * out_img + gi * p.cg_out * p.plane(), p.cg_out, p.plane());
      ym.noalias() = wm * cm;
    }
  }
}

// dx += conv^T(dy, w); dw += dy * col(x)^T
void conv_backward(const ConvPlan& p, const double* x, const double* w, const double* dy,
                   double* dx, double* dw) {
  const std::size_t in_img = p.c_in * p.win.height * p.win.width;
  const std::size_t out_img = p.c_out * p.plane();
  const std::size_t wsize = p.c_out * p.rows();
  std::vector<std::vector<double>> dw_parts(dw ? p.batch : 0);
#ifdef CFIN_USE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(p.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<double> col(p.rows() * p.plane());
    if (dw) dw_parts[b].assign(wsize, 0.0);
    for (std::size_t gi = 0; gi < p.groups; ++gi) {
      ConstMapMat wm(w + gi * p.cg_out * p.rows(), p.cg_out, p.rows());
      ConstMapMat dym(dy + b * out_img + gi * p.cg_out * p.plane(), p.cg_out, p.plane());
      const std::size_t img_off = b * in_img + gi * p.cg_in * p.win.height * p.win.width;
      if (dw) {
        im2col(x + img_off, p.win, col.data());
        ConstMapMat cm(col.data(), p.rows(), p.plane());
        MapMat dwm(dw_parts[b].data() + gi * p.cg_out * p.rows(), p.cg_out, p.rows());
        dwm.noalias() += dym * cm.transpose();
      }
      if (dx) {
        MapMat cm(col.data(), p.rows(), p.plane());
        cm.noalias() = wm.transpose() * dym;
        col2im(col.data(), p.win, dx + img_off);
      }
    }
  }
  if (dw) {
    for (const auto& part : dw_parts)
      for (std::size_t i = 0; i < wsize; ++i) dw[i] += part[i];
  }
}

// y = deconv(x, w): x is the column side, y the image side.
void deconv_forward(const ConvPlan& p, const double* x, const double* w, double* y) {
  const std::size_t in_img = p.c_in * p.plane();
  const std::size_t out_img = p.c_out * p.win.height * p.win.width;
  const std::size_t rows = p.cg_out * p.k * p.k;
#ifdef CFIN_USE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(p.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<double> col(rows * p.plane());
    for (std::size_t gi = 0; gi < p.groups; ++gi) {
      ConstMapMat wm(w + gi * p.cg_in * rows, p.cg_in, rows);
      ConstMapMat xm(x + b * in_img + gi * p.cg_in * p.plane(), p.cg_in, p.plane());
      MapMat cm(col.data(), rows, p.plane());
      cm.noalias() = wm.transpose() * xm;
      col2im(col.data(), p.win, y + b * out_img + gi * p.cg_out * p.win.height * p.win.width);
    }
  }
}

void deconv_backward(const ConvPlan& p, const double* x, const double* w, const double* dy,
                     double* dx, double* dw) {
  const std::size_t in_img = p.c_in * p.plane();
  const std::size_t out_img = p.c_out * p.win.height * p.win.width;
  const std::size_t rows = p.cg_out * p.k * p.k;
  const std::size_t wsize = p.c_in * rows;
  std::vector<std::vector<double>> dw_parts(dw ? p.batch : 0);
#ifdef CFIN_USE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(p.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<double> col(rows * p.plane());
    if (dw) dw_parts[b].assign(wsize, 0.0);
    for (std::size_t gi = 0; gi < p.groups; ++gi) {
      im2col(dy + b * out_img + gi * p.cg_out * p.win.height * p.win.width, p.win, col.data());
      ConstMapMat cm(col.data(), rows, p.plane());
      ConstMapMat wm(w + gi * p.cg_in * rows, p.cg_in, rows);
      const std::size_t x_off = b * in_img + gi * p.cg_in * p.plane();
      if (dx) {
        MapMat dxm(dx + x_off, p.cg_in, p.plane());
        dxm.noalias() += wm * cm;
      }
      if (dw) {
        ConstMapMat xm(x + x_off, p.cg_in, p.plane());
        MapMat dwm(dw_parts[b].data() + gi * p.cg_in * rows, p.cg_in, rows);
        dwm.noalias() += xm * cm.transpose();
      }
    }
  }
  if (dw) {
    for (const auto& part : dw_parts)
      for (std::size_t i = 0; i < wsize; ++i) dw[i] += part[i];
  }
}

}  // namespace

void set_num_threads(int n) {
#ifdef CFIN_USE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

Shape conv2d_shape(const Shape& x, const Shape& w, const ConvGeom& g) {
  const ConvPlan p = plan_conv(x, w, g);
  return {x[0], p.c_out, p.win.out_h, p.win.out_w};
}

Shape deconv2d_shape(const Shape& x, const Shape& w, const ConvGeom& g) {
  const ConvPlan p = plan_deconv(x, w, g);
  return {x[0], p.c_out, p.win.height, p.win.width};
}

Tensor conv2d_raw(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvGeom& g) {
  const ConvPlan p = plan_conv(x.shape(), w.shape(), g);
  Tensor y({p.batch, p.c_out, p.win.out_h, p.win.out_w});
  conv_forward(p, x.data().data(), w.data().data(), y.data().data());
  if (bias) add_bias(y, *bias);
  return y;
}

Tensor deconv2d_raw(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvGeom& g) {
  const ConvPlan p = plan_deconv(x.shape(), w.shape(), g);
  Tensor y({p.batch, p.c_out, p.win.height, p.win.width});
  deconv_forward(p, x.data().data(), w.data().data(), y.data().data());
  if (bias) add_bias(y, *bias);
  return y;
}

Var conv2d(const Var& x, const Var& w, const std::optional<Var>& bias, const ConvGeom& g) {
  const ConvPlan p = plan_conv(x.shape(), w.shape(), g);
  Tensor y = conv2d_raw(x.value(), w.value(), bias ? &bias->value() : nullptr, g);
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return make_result(std::move(y), std::move(inputs), "conv2d", [p](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Tensor dx = xn.requires_grad ? Tensor(xn.value.shape()) : Tensor();
    Tensor dw = wn.requires_grad ? Tensor(wn.value.shape()) : Tensor();
    conv_backward(p, xn.value.data().data(), wn.value.data().data(), self.grad.data().data(),
                  xn.requires_grad ? dx.data().data() : nullptr,
                  wn.requires_grad ? dw.data().data() : nullptr);
    if (xn.requires_grad) xn.accumulate(dx);
    if (wn.requires_grad) wn.accumulate(dw);
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Node& bn = *self.parents[2];
      bn.accumulate(bias_grad(self.grad).reshaped(bn.value.shape()));
    }
  });
}

Var deconv2d(const Var& x, const Var& w, const std::optional<Var>& bias, const ConvGeom& g) {
  const ConvPlan p = plan_deconv(x.shape(), w.shape(), g);
  Tensor y = deconv2d_raw(x.value(), w.value(), bias ? &bias->value() : nullptr, g);
  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return make_result(std::move(y), std::move(inputs), "deconv2d", [p](Node& self) {
    Node& xn = *self.parents[0];
    Node& wn = *self.parents[1];
    Tensor dx = xn.requires_grad ? Tensor(xn.value.shape()) : Tensor();
    Tensor dw = wn.requires_grad ? Tensor(wn.value.shape()) : Tensor();
    deconv_backward(p, xn.value.data().data(), wn.value.data().data(), self.grad.data().data(),
                    xn.requires_grad ? dx.data().data() : nullptr,
                    wn.requires_grad ? dw.data().data() : nullptr);
    if (xn.requires_grad) xn.accumulate(dx);
    if (wn.requires_grad) wn.accumulate(dw);
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Node& bn = *self.parents[2];
      bn.accumulate(bias_grad(self.grad).reshaped(bn.value.shape()));
    }
  });
}

}  // namespace cfin
