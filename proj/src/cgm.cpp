#include "cfin/cgm.hpp"

#include <stdexcept>

namespace cfin {

CgmParams make_cgm(ParamStore& store, const std::string& name, std::size_t c_in,
                   std::size_t c_out, std::size_t k, std::size_t groups, Rng& rng) {
  if (k % 2 == 0) throw std::invalid_argument(name + ": receptive size k must be odd");
  if (groups == 0 || c_in % groups != 0 || c_out % groups != 0) {
    throw ShapeError(name + ": C_in=" + std::to_string(c_in) + ", C_out=" + std::to_string(c_out) +
                     " not divisible by groups=" + std::to_string(groups));
  }
  CgmParams p;
  p.k = k;
  p.groups = groups;
  p.base_kernel = store.add(name + ".weight", kaiming_uniform({c_out, c_in, k, k}, c_in * k * k, rng));
  p.spatial_squeeze = make_conv(store, name + ".spatial_squeeze", {k * k, k, 1}, rng);
  p.spatial_expand = make_conv(store, name + ".spatial_expand", {k, k * k, 1}, rng);
  p.channel_mix = make_conv(store, name + ".channel_mix", {c_in, c_out, 1, {1, 0, groups}}, rng);
  return p;
}

namespace {

struct Modulation {
  Var spatial;  // (B, C_in, k, k)
  Var channel;  // (B, C_out, k, k)
};

Modulation modulation(const Var& x, const CgmParams& p) {
  const Shape& s = x.shape();
  if (s[1] != p.in_channels()) {
    throw ShapeError("cgm: expected " + std::to_string(p.in_channels()) + " channels, got " +
                     to_string(s));
  }
  const std::size_t k = p.k;
  const Var context = adaptive_max_pool(x, k);
  // treat each (sample, channel) pair as a batch row with k*k features
  Var flat = reshape(context, {s[0] * s[1], k * k, 1, 1});
  flat = p.spatial_expand(p.spatial_squeeze(flat));
  return {reshape(flat, {s[0], s[1], k, k}), p.channel_mix(context)};
}

Var sample_kernel(const Modulation& m, const CgmParams& p, std::size_t b) {
  const std::size_t k = p.k;
  const Var spatial = slice_batch(m.spatial, b);  // (1, C_in, k, k)
  const Var channel = reshape(slice_batch(m.channel, b), {p.out_channels(), 1, k, k});
  return mul(p.base_kernel, add(channel, spatial));
}

}  // namespace

Tensor cgm_kernels(const Var& x, const CgmParams& p) {
  const Modulation m = modulation(x, p);
  const std::size_t B = x.shape()[0];
  std::vector<double> data;
  for (std::size_t b = 0; b < B; ++b) {
    const Var w = sample_kernel(m, p, b);
    data.insert(data.end(), w.value().data().begin(), w.value().data().end());
  }
  const Shape& ks = p.base_kernel.shape();
  return Tensor({B * ks[0], ks[1], ks[2], ks[3]}, std::move(data));
}

Var cgm_forward(const Var& x, const CgmParams& p) {
  const Modulation m = modulation(x, p);
  const std::size_t B = x.shape()[0];
  const ConvGeom same{1, (p.k - 1) / 2, 1};
  std::vector<Var> outs;
  outs.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    outs.push_back(conv2d(slice_batch(x, b), sample_kernel(m, p, b), std::nullopt, same));
  }
  return B == 1 ? outs.front() : concat_batch(outs);
}

std::uint64_t cgm_macs(const CgmParams& p, std::size_t h, std::size_t w) {
  const std::size_t k = p.k;
  const std::size_t c_in = p.in_channels(), c_out = p.out_channels();
  std::uint64_t macs = conv_macs(c_in, c_out, k, 1, h, w);
  macs += c_in * p.spatial_squeeze.macs(1, 1) + c_in * p.spatial_expand.macs(1, 1);
  macs += p.channel_mix.macs(k, k);
  macs += static_cast<std::uint64_t>(c_out) * c_in * k * k;  // kernel modulation
  return macs;
}

CgaParams make_cga(ParamStore& store, const std::string& name, std::size_t channels,
                   std::size_t heads, std::size_t k, std::size_t groups, Rng& rng) {
  if (heads == 0 || channels % heads != 0) {
    throw ShapeError(name + ": channels " + std::to_string(channels) + " not divisible by heads " +
                     std::to_string(heads));
  }
  CgaParams p;
  p.heads = heads;
  p.q = make_cgm(store, name + ".q", channels, channels, k, groups, rng);
  p.k = make_cgm(store, name + ".k", channels, channels, k, groups, rng);
  p.v = make_cgm(store, name + ".v", channels, channels, k, groups, rng);
  p.temperature = store.add(name + ".temperature", Tensor({1, heads, 1, 1}, 1.0));
  return p;
}

CgaResult cga_forward(const Var& x, const CgaParams& p, const std::optional<KeyValue>& injected) {
  const Shape& s = x.shape();
  const std::size_t h = p.heads;
  if (s[1] % h != 0) throw ShapeError("cga: channels not divisible by heads");
  const Shape heads_shape{s[0], h, s[1] / h, s[2] * s[3]};
  const Var q = reshape(cgm_forward(x, p.q), heads_shape);
  Var key = reshape(cgm_forward(x, p.k), heads_shape);
  Var value = reshape(cgm_forward(x, p.v), heads_shape);
  if (injected) {
    if (injected->key.shape() != heads_shape || injected->value.shape() != heads_shape) {
      throw ShapeError("cga: injected K/V must be " + to_string(heads_shape));
    }
    key = add(key, injected->key);
    value = add(value, injected->value);
  }
  // (C/h x HW) . (HW x C/h): each row distributes over channels
  const Var logits = div(matmul(key, q, false, true), p.temperature);
  const Var attn = softmax(logits, 3);
  const Var out = reshape(matmul(attn, value), s);
  return {out, {key, value}, attn};
}

std::uint64_t cga_macs(const CgaParams& p, std::size_t h, std::size_t w) {
  const std::size_t c = p.q.in_channels();
  const std::size_t d = c / p.heads;
  std::uint64_t macs = cgm_macs(p.q, h, w) + cgm_macs(p.k, h, w) + cgm_macs(p.v, h, w);
  macs += 2ULL * p.heads * d * d * h * w;  // K Q^T and A V
  return macs;
}

}  // namespace cfin
