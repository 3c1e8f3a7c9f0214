#include "cfin/metrics.hpp"

#include <cmath>
#include <limits>

#include "cfin/image.hpp"

namespace cfin {
namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

void check_pair(const Tensor& a, const Tensor& b, std::size_t shave, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (a.height() <= 2 * shave || a.width() <= 2 * shave) {
    throw ShapeError(std::string(what) + ": nothing left after shaving " + std::to_string(shave) + " pixels from " +
                     to_string(a.shape()));
  }
}

std::array<double, kWindow> gaussian() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable Gaussian filter of one plane.
std::vector<double> blur(const std::vector<double>& p, std::size_t H, std::size_t W) {
  static const auto g = gaussian();
  const std::size_t oh = H - kWindow + 1, ow = W - kWindow + 1;
  std::vector<double> tmp(H * ow), out(oh * ow);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < ow; ++w) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * p[h * W + w + k];
      tmp[h * ow + w] = s;
    }
  for (std::size_t h = 0; h < oh; ++h)
    for (std::size_t w = 0; w < ow; ++w) {
      double s = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * tmp[(h + k) * ow + w];
      out[h * ow + w] = s;
    }
  return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, std::size_t shave) {
  check_pair(a, b, shave, "psnr");
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t bi = 0; bi < a.batch(); ++bi)
    for (std::size_t c = 0; c < a.channels(); ++c)
      for (std::size_t h = shave; h < a.height() - shave; ++h)
        for (std::size_t w = shave; w < a.width() - shave; ++w) {
          const double d = a.at(bi, c, h, w) - b.at(bi, c, h, w);
          se += d * d;
          ++n;
        }
  const double mse = se / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b, std::size_t shave) {
  check_pair(a, b, shave, "ssim");
  const std::size_t H = a.height() - 2 * shave, W = a.width() - 2 * shave;
  if (H < kWindow || W < kWindow) {
    throw ShapeError("ssim: need at least 11x11 pixels after shaving, got " + std::to_string(H) + "x" +
                     std::to_string(W));
  }
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> x(H * W), y(H * W), xx(H * W), yy(H * W), xy(H * W);
  for (std::size_t bi = 0; bi < a.batch(); ++bi)
    for (std::size_t c = 0; c < a.channels(); ++c) {
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          const std::size_t i = h * W + w;
          x[i] = a.at(bi, c, h + shave, w + shave);
          y[i] = b.at(bi, c, h + shave, w + shave);
          xx[i] = x[i] * x[i];
          yy[i] = y[i] * y[i];
          xy[i] = x[i] * y[i];
        }
      const auto mx = blur(x, H, W), my = blur(y, H, W);
      const auto sxx = blur(xx, H, W), syy = blur(yy, H, W), sxy = blur(xy, H, W);
      for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2.0 * mx[i] * my[i] + C1) * (2.0 * cov + C2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
        ++count;
      }
    }
  return total / static_cast<double>(count);
}

Quality evaluate_y(const Tensor& sr, const Tensor& hr, std::size_t shave) {
  const Tensor ys = rgb_to_y(sr), yh = rgb_to_y(hr);
  return {psnr(ys, yh, shave), ssim(ys, yh, shave)};
}

}  // namespace cfin
