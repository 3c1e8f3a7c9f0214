#include "cfin/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace cfin {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = parameter(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

std::optional<Var> ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : items_) {
    if (n == name) return v;
  }
  return std::nullopt;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : items_) n += v.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : items_) v.zero_grad();
}

Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng, double a) {
  const double gain = std::sqrt(2.0 / (1.0 + a * a));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Var ConvLayer::effective_kernel() const {
  return gain ? weight_norm(kernel, *gain) : kernel;
}

Var ConvLayer::operator()(const Var& x) const {
  const Var w = effective_kernel();
  return transposed ? deconv2d(x, w, bias, geom) : conv2d(x, w, bias, geom);
}

std::size_t ConvLayer::out_channels() const {
  return transposed ? kernel.shape()[1] * geom.groups : kernel.shape()[0];
}

std::size_t ConvLayer::in_channels() const {
  return transposed ? kernel.shape()[0] : kernel.shape()[1] * geom.groups;
}

std::uint64_t ConvLayer::macs(std::size_t h, std::size_t w) const {
  const std::size_t k = kernel_size();
  if (transposed) {
    // every input pixel scatters a k x k patch into each output channel of its group
    return conv_macs(out_channels(), in_channels(), k, geom.groups, h, w);
  }
  const std::size_t oh = (h + 2 * geom.pad - k) / geom.stride + 1;
  const std::size_t ow = (w + 2 * geom.pad - k) / geom.stride + 1;
  return conv_macs(in_channels(), out_channels(), k, geom.groups, oh, ow);
}

std::uint64_t conv_macs(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t groups,
                        std::size_t out_h, std::size_t out_w) {
  return static_cast<std::uint64_t>(c_out) * (c_in / groups) * k * k * out_h * out_w;
}

ConvLayer make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec, Rng& rng) {
  const std::size_t groups = spec.geom.groups;
  if (groups == 0 || spec.c_in % groups != 0 || spec.c_out % groups != 0) {
    throw ShapeError(name + ": channels not divisible by groups");
  }
  ConvLayer layer;
  layer.geom = spec.geom;
  layer.transposed = spec.transposed;
  const Shape kshape = spec.transposed ? Shape{spec.c_in, spec.c_out / groups, spec.k, spec.k}
                                       : Shape{spec.c_out, spec.c_in / groups, spec.k, spec.k};
  const std::size_t fan_in = (spec.c_in / groups) * spec.k * spec.k;
  Tensor init = kaiming_uniform(kshape, fan_in, rng);
  if (spec.weight_norm) {
    const std::size_t rows = kshape[0];
    const std::size_t n = kshape[1] * kshape[2] * kshape[3];
    Tensor g({rows, 1, 1, 1});
    for (std::size_t o = 0; o < rows; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += init[o * n + i] * init[o * n + i];
      g[o] = std::sqrt(s);
    }
    layer.kernel = store.add(name + ".v", std::move(init));
    layer.gain = store.add(name + ".g", std::move(g));
  } else {
    layer.kernel = store.add(name + ".weight", std::move(init));
  }
  if (spec.bias) layer.bias = store.add(name + ".bias", Tensor({spec.c_out, 1, 1, 1}));
  return layer;
}

}  // namespace cfin
