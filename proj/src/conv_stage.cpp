#include "cfin/conv_stage.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cfin {

const char* to_string(MaskMode m) {
  switch (m) {
    case MaskMode::gumbel: return "gumbel";
    case MaskMode::softmax: return "softmax";
    case MaskMode::maxpool: return "maxpool";
  }
  return "?";
}

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "gumbel") return MaskMode::gumbel;
  if (s == "softmax") return MaskMode::softmax;
  if (s == "maxpool") return MaskMode::maxpool;
  throw std::invalid_argument("unknown mask mode: " + s);
}

Tensor gumbel_softmax(const Tensor& logits, double tau, Rng* rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax: tau must be positive");
  if (logits.channels() < 2) throw ShapeError("gumbel_softmax: need at least two candidates");
  Tensor z = logits;
  if (rng) {
    // u in (0, 1) open interval so that -log(-log(u)) stays finite
    std::uniform_real_distribution<double> uni(std::numeric_limits<double>::min(), 1.0);
    for (double& v : z.data()) {
      double u = uni(*rng);
      while (u >= 1.0) u = uni(*rng);
      v += -std::log(-std::log(u));
    }
  }
  for (double& v : z.data()) v /= tau;
  return softmax(z, 1);
}

Tensor one_hot_argmax(const Tensor& probs) {
  const Shape& s = probs.shape();
  Tensor hard(s);
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t h = 0; h < s[2]; ++h)
      for (std::size_t w = 0; w < s[3]; ++w) {
        std::size_t best = 0;
        for (std::size_t m = 1; m < s[1]; ++m) {
          if (probs.at(b, m, h, w) > probs.at(b, best, h, w)) best = m;
        }
        hard.at(b, best, h, w) = 1.0;
      }
  return hard;
}

namespace {

Tensor channel0(const Tensor& t) {
  const Shape& s = t.shape();
  Tensor out({s[0], 1, s[2], s[3]});
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t h = 0; h < s[2]; ++h)
      for (std::size_t w = 0; w < s[3]; ++w) out.at(b, 0, h, w) = t.at(b, 0, h, w);
  return out;
}

}  // namespace

Var select_mask(const Var& logits, MaskMode mode, double tau, const ForwardOptions& opts) {
  if (!(tau > 0.0)) throw std::invalid_argument("select_mask: tau must be positive");
  const Tensor& r = logits.value();
  Rng* noise = nullptr;
  if (mode == MaskMode::gumbel && opts.mode == Mode::train) {
    if (!opts.rng) throw std::invalid_argument("select_mask: train mode needs an rng for Gumbel noise");
    noise = opts.rng;
  }
  Tensor soft = mode == MaskMode::maxpool ? Tensor() : gumbel_softmax(r, tau, noise);

  Tensor hard;
  MaskTape* tape = opts.mask_tape;
  if (tape && tape->use == MaskTape::Use::replay) {
    if (tape->cursor >= tape->masks.size()) throw std::logic_error("mask tape exhausted");
    hard = tape->masks[tape->cursor++];
    if (hard.shape() != r.shape()) throw ShapeError("mask tape entry has the wrong shape");
  } else {
    hard = one_hot_argmax(mode == MaskMode::maxpool ? r : soft);
    if (tape) tape->masks.push_back(hard);
  }
  if (opts.mask_log) opts.mask_log->push_back(hard);

  const bool relaxed = opts.mask_grad == MaskGrad::relaxed && mode != MaskMode::maxpool;
  Tensor value = relaxed ? channel0(soft) : channel0(hard);
  if (opts.mask_grad == MaskGrad::frozen ||
      (opts.mask_grad == MaskGrad::relaxed && mode == MaskMode::maxpool)) {
    return constant(std::move(value));
  }

  if (mode == MaskMode::maxpool) {
    // max over candidates routes the gradient to the winning logit only
    return make_result(std::move(value), {logits}, "mask_maxpool", [hard](Node& self) {
      Node& rn = *self.parents[0];
      const Shape& s = rn.value.shape();
      Tensor g(s);
      for (std::size_t b = 0; b < s[0]; ++b)
        for (std::size_t h = 0; h < s[2]; ++h)
          for (std::size_t w = 0; w < s[3]; ++w) g.at(b, 0, h, w) = self.grad.at(b, 0, h, w) * hard.at(b, 0, h, w);
      rn.accumulate(g);
    });
  }
  // d soft_0 / d R_m = soft_0 (delta_m0 - soft_m) / tau
  return make_result(std::move(value), {logits}, "mask_softmax", [soft = std::move(soft), tau](Node& self) {
    Node& rn = *self.parents[0];
    const Shape& s = rn.value.shape();
    Tensor g(s);
    for (std::size_t b = 0; b < s[0]; ++b)
      for (std::size_t h = 0; h < s[2]; ++h)
        for (std::size_t w = 0; w < s[3]; ++w) {
          const double up = self.grad.at(b, 0, h, w);
          const double s0 = soft.at(b, 0, h, w);
          for (std::size_t m = 0; m < s[1]; ++m) {
            const double delta = m == 0 ? 1.0 : 0.0;
            g.at(b, m, h, w) = up * s0 * (delta - soft.at(b, m, h, w)) / tau;
          }
        }
    rn.accumulate(g);
  });
}

Var ChannelAttention::operator()(const Var& x) const {
  const Var s = sigmoid(up(relu(down(global_avg_pool(x)))));
  return mul(x, s);
}

ChannelAttention make_channel_attention(ParamStore& store, const std::string& name,
                                        std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ShapeError(name + ": channels not divisible by the attention reduction");
  }
  const std::size_t mid = channels / reduction;
  return ChannelAttention{make_conv(store, name + ".down", {channels, mid, 1}, rng),
                          make_conv(store, name + ".up", {mid, channels, 1}, rng)};
}

RifuParams make_rifu(ParamStore& store, const std::string& name, std::size_t channels,
                     const RifuOptions& options, Rng& rng) {
  if (!(options.tau > 0.0)) throw std::invalid_argument(name + ": tau must be positive");
  RifuParams p;
  p.options = options;
  const ConvGeom same3{1, 1, 1};
  p.conv_in = make_conv(store, name + ".conv_in", {channels, channels, 3, same3, true, true}, rng);
  if (options.mask_enabled) {
    p.proj_mask = make_conv(store, name + ".proj_mask", {channels, kMaskChannels, 1, {}, true, true}, rng);
  }
  p.conv_out = make_conv(store, name + ".conv_out", {channels, channels, 3, same3, true, true}, rng);
  p.ca = make_channel_attention(store, name + ".ca", channels, options.ca_reduction, rng);
  return p;
}

Var rifu_forward(const Var& x, const RifuParams& p, const ForwardOptions& opts) {
  if (x.shape()[1] != p.conv_in.in_channels()) {
    throw ShapeError("rifu: expected " + std::to_string(p.conv_in.in_channels()) +
                     " channels, got " + to_string(x.shape()));
  }
  const Var mixed = leaky_relu(p.conv_in(x), p.options.lrelu_slope);
  Var kept = mixed;
  if (p.options.mask_enabled) {
    const Var logits = (*p.proj_mask)(mixed);
    kept = mul(select_mask(logits, p.options.mask_mode, p.options.tau, opts), mixed);
  }
  return add(p.ca(p.conv_out(kept)), x);
}

CiamParams make_ciam(ParamStore& store, const std::string& name, std::size_t channels,
                     const RifuOptions& options, bool updown_branch, Rng& rng) {
  CiamParams p;
  p.rifu1 = make_rifu(store, name + ".rifu1", channels, options, rng);
  p.rifu2 = make_rifu(store, name + ".rifu2", channels, options, rng);
  p.rifu3 = make_rifu(store, name + ".rifu3", channels, options, rng);
  p.updown_branch = updown_branch;
  if (updown_branch) {
    p.up = make_conv(store, name + ".up", {channels, channels, 2, {2, 0, 1}, true, false, true}, rng);
    p.down = make_conv(store, name + ".down", {channels, channels, 3, {2, 1, 1}, true}, rng);
  }
  return p;
}

Var ciam_forward(const Var& x, const CiamParams& p, const ForwardOptions& opts) {
  const Shape& s = x.shape();
  if (s[2] < 2 || s[3] < 2) throw ShapeError("ciam: spatial dims below 2x2: " + to_string(s));
  const Var x1 = rifu_forward(x, p.rifu1, opts);
  const Var gate = sigmoid(rifu_forward(x1, p.rifu2, opts));
  const Var branch = p.updown_branch ? p.down(p.up(x)) : x;
  if (branch.shape() != s) throw ShapeError("ciam: up/down branch changed the shape");
  const Var x2 = mul(branch, gate);
  return add(rifu_forward(add(x2, x1), p.rifu3, opts), x);
}

}  // namespace cfin
