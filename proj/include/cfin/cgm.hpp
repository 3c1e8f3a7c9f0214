#pragma once

#include <optional>
#include <string>

#include "cfin/layers.hpp"

namespace cfin {

/// Context guided max-conv: a convolution whose base kernel is modulated per
/// sample by two branches computed from a k x k max-pooled summary of the input.
struct CgmParams {
  std::size_t k = 3;
  std::size_t groups = 1;
  Var base_kernel;  // (C_out, C_in, k, k)
  // spatial branch, shared across channels: k*k -> k -> k*k
  ConvLayer spatial_squeeze, spatial_expand;
  // channel branch: grouped linear C_in -> C_out applied at every pooled position
  ConvLayer channel_mix;

  std::size_t in_channels() const { return base_kernel.shape()[1]; }
  std::size_t out_channels() const { return base_kernel.shape()[0]; }
};

CgmParams make_cgm(ParamStore& store, const std::string& name, std::size_t c_in,
                   std::size_t c_out, std::size_t k, std::size_t groups, Rng& rng);

/// Per-sample modulated kernels, (B * C_out, C_in, k, k) stacked along axis 0.
/// Exposed so tests can compare kernels across batch elements.
Tensor cgm_kernels(const Var& x, const CgmParams& p);

/// Output has shape (B, C_out, H, W); padding (k - 1) / 2.
Var cgm_forward(const Var& x, const CgmParams& p);

/// Multiply-accumulates for one sample of spatial size h x w.
std::uint64_t cgm_macs(const CgmParams& p, std::size_t h, std::size_t w);

/// Context guided attention: channel-transposed multi-head attention whose
/// Q/K/V projections are CGMs, with a learnable temperature per head.
struct CgaParams {
  CgmParams q, k, v;
  Var temperature;  // (1, heads, 1, 1)
  std::size_t heads = 1;
};

CgaParams make_cga(ParamStore& store, const std::string& name, std::size_t channels,
                   std::size_t heads, std::size_t k, std::size_t groups, Rng& rng);

struct KeyValue {
  Var key, value;  // each (B, heads, C/heads, H*W)
};

struct CgaResult {
  Var output;      // (B, C, H, W)
  KeyValue used;   // K and V after any injected sum
  Var attention;   // (B, heads, C/heads, C/heads)
};

/// With `injected`, K <- K' + K_in and V <- V' + V_in before attending.
CgaResult cga_forward(const Var& x, const CgaParams& p,
                      const std::optional<KeyValue>& injected = std::nullopt);

std::uint64_t cga_macs(const CgaParams& p, std::size_t h, std::size_t w);

}  // namespace cfin
