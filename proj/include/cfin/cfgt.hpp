#pragma once

#include "cfin/cgm.hpp"

namespace cfin {

/// Residual pair of CGMs (k=3 then k=1) with a GELU between them.
struct IgpParams {
  CgmParams wide;   // k = 3
  CgmParams point;  // k = 1
};

IgpParams make_igp(ParamStore& store, const std::string& name, std::size_t channels,
                   std::size_t groups, Rng& rng);

/// point(gelu(wide(x))) + x
Var igp_forward(const Var& x, const IgpParams& p);

struct LayerNormParams {
  Var gain, bias;  // (1, C, 1, 1)
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t channels);
Var apply(const LayerNormParams& ln, const Var& x);

inline constexpr double kLayerNormEps = 1e-6;

struct CfgtFlags {
  bool kv_pass = true;
  // The second attention reads the block input; set to read the first
  // residual output instead.
  bool second_query_from_med = false;
};

/// Cross-receptive field guide transformer block.
struct CfgtParams {
  CgaParams cga1, cga2;
  IgpParams igp;
  LayerNormParams norm1, norm2, norm3;
};

/// cross_k=false builds the second attention with k2 = k1.
CfgtParams make_cfgt(ParamStore& store, const std::string& name, std::size_t channels,
                     std::size_t heads, std::size_t k1, std::size_t k2, bool cross_k,
                     std::size_t groups, Rng& rng);

struct CfgtTrace {
  KeyValue first;   // K/V produced by the first attention
  Var med1, med2;
};

/// T1 = Norm(CGA1(T)) + T
/// T2 = Norm(CGA2(T, K, V)) + T1
/// out = Norm(IGP(T2)) + T2
Var cfgt_forward(const Var& t_in, const CfgtParams& p, const CfgtFlags& flags,
                 CfgtTrace* trace = nullptr);

std::uint64_t cfgt_macs(const CfgtParams& p, std::size_t h, std::size_t w);

}  // namespace cfin
