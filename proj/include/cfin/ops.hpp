#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "cfin/autograd.hpp"
#include "cfin/tensor.hpp"

namespace cfin {

// ---------------------------------------------------------------------------
// Raw tensor kernels (no graph). Used by the differentiable ops below and
// directly by tests.

struct ConvGeom {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
};

/// Output shape of conv2d for input `x` and kernel `w` shaped (C_out, C_in/groups, k, k).
Shape conv2d_shape(const Shape& x, const Shape& w, const ConvGeom& g);
/// Output shape of deconv2d for kernel `w` shaped (C_in, C_out/groups, k, k).
Shape deconv2d_shape(const Shape& x, const Shape& w, const ConvGeom& g);

/// im2col + GEMM cross-correlation. `bias` may be null.
Tensor conv2d_raw(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvGeom& g);
Tensor deconv2d_raw(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvGeom& g);

/// Caps internal data parallelism (no-op without OpenMP).
void set_num_threads(int n);

// ---------------------------------------------------------------------------
// Differentiable ops. Elementwise binaries broadcast any size-1 dimension.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);

Var leaky_relu(const Var& x, double slope);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var gelu(const Var& x);

/// Softmax along `axis` (0..3).
Var softmax(const Var& x, std::size_t axis);

/// Normalizes over the channel axis at every (b, h, w), then applies the
/// per-channel affine `gain`/`bias`, each shaped (1, C, 1, 1).
Var layer_norm_channels(const Var& x, const Var& gain, const Var& bias, double eps);

/// (B, C, 1, 1) spatial mean.
Var global_avg_pool(const Var& x);
/// Adaptive max pooling to (B, C, k, k); window i spans
/// [floor(i*H/k), ceil((i+1)*H/k)).
Var adaptive_max_pool(const Var& x, std::size_t k);

Var conv2d(const Var& x, const Var& w, const std::optional<Var>& bias, const ConvGeom& g);
Var deconv2d(const Var& x, const Var& w, const std::optional<Var>& bias, const ConvGeom& g);

/// out[b, c, r*h+i, r*w+j] = in[b, c*r*r + i*r + j, h, w]
Var pixel_shuffle(const Var& x, std::size_t r);
Var pixel_unshuffle(const Var& x, std::size_t r);

Var reshape(const Var& x, const Shape& s);

/// Batched matrix product over the trailing two axes; axes 0 and 1 are batch axes.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

Var slice_batch(const Var& x, std::size_t b);
Var concat_batch(const std::vector<Var>& parts);

/// kernel[o] = g[o] * v[o] / ||v[o]||, with `g` shaped (C_out, 1, 1, 1).
Var weight_norm(const Var& v, const Var& g);

/// Scalar sum / mean of all elements, shaped (1,1,1,1).
Var sum_all(const Var& x);
Var mean_all(const Var& x);
/// Mean absolute error; the subgradient at zero is zero.
Var l1_loss(const Var& pred, const Var& target);

// Raw helpers that share implementation with the ops above.
Tensor pixel_shuffle(const Tensor& x, std::size_t r);
Tensor pixel_unshuffle(const Tensor& x, std::size_t r);
Tensor softmax(const Tensor& x, std::size_t axis);

}  // namespace cfin
