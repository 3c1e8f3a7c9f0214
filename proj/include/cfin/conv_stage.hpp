#pragma once

#include <string>

#include "cfin/layers.hpp"

namespace cfin {

/// Which relaxation produces the RIFU selection logits' one-hot mask.
enum class MaskMode { gumbel, softmax, maxpool };

const char* to_string(MaskMode m);
MaskMode mask_mode_from_string(const std::string& s);

/// Number of mask candidates per pixel.
inline constexpr std::size_t kMaskChannels = 3;

/// Gumbel-Softmax over axis 1: softmax((logits + g) / tau) with g ~ Gumbel(0, 1).
/// No noise is drawn when `rng` is null.
Tensor gumbel_softmax(const Tensor& logits, double tau, Rng* rng);

/// One-hot of the per-pixel argmax over axis 1.
Tensor one_hot_argmax(const Tensor& probs);

/// Single-channel spatial mask selected from the (B, M, H, W) logits. The
/// forward value is the hard one-hot entry of candidate 0 (so every pixel is
/// exactly 0 or 1); the gradient follows `opts.mask_grad`.
Var select_mask(const Var& logits, MaskMode mode, double tau, const ForwardOptions& opts);

/// Squeeze-excitation: x * sigmoid(up(relu(down(avgpool(x))))).
struct ChannelAttention {
  ConvLayer down, up;
  Var operator()(const Var& x) const;
};

ChannelAttention make_channel_attention(ParamStore& store, const std::string& name,
                                        std::size_t channels, std::size_t reduction, Rng& rng);

struct RifuOptions {
  bool mask_enabled = true;
  MaskMode mask_mode = MaskMode::gumbel;
  double tau = 1.0;
  double lrelu_slope = 0.05;
  std::size_t ca_reduction = 4;
};

/// Redundant information filter unit.
struct RifuParams {
  ConvLayer conv_in;
  std::optional<ConvLayer> proj_mask;  // absent when the mask is ablated
  ConvLayer conv_out;
  ChannelAttention ca;
  RifuOptions options;
};

RifuParams make_rifu(ParamStore& store, const std::string& name, std::size_t channels,
                     const RifuOptions& options, Rng& rng);

/// y = CA(conv_out(mask * lrelu(conv_in(x)))) + x
Var rifu_forward(const Var& x, const RifuParams& p, const ForwardOptions& opts);

/// Cross-scale aggregation of three RIFUs with an upsample/downsample gate.
struct CiamParams {
  RifuParams rifu1, rifu2, rifu3;
  ConvLayer up;    // transposed, k=2 s=2
  ConvLayer down;  // k=3 s=2 p=1
  bool updown_branch = true;
};

CiamParams make_ciam(ParamStore& store, const std::string& name, std::size_t channels,
                     const RifuOptions& options, bool updown_branch, Rng& rng);

/// x1 = RIFU1(x); x2 = down(up(x)) * sigmoid(RIFU2(x1)); out = RIFU3(x2 + x1) + x
Var ciam_forward(const Var& x, const CiamParams& p, const ForwardOptions& opts);

}  // namespace cfin
