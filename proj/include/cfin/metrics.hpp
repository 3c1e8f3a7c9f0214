#pragma once

#include "cfin/tensor.hpp"

namespace cfin {

/// 10 * log10(1 / MSE) over all elements after removing `shave` pixels from
/// every border. Identical inputs give +infinity.
double psnr(const Tensor& a, const Tensor& b, std::size_t shave = 0);

/// Mean SSIM over every valid 11x11 Gaussian window (sigma 1.5) of every
/// plane, with K1 = 0.01, K2 = 0.03 and dynamic range 1.
double ssim(const Tensor& a, const Tensor& b, std::size_t shave = 0);

struct Quality {
  double psnr, ssim;
};

/// PSNR and SSIM on the luma of two RGB tensors.
Quality evaluate_y(const Tensor& sr, const Tensor& hr, std::size_t shave);

}  // namespace cfin
