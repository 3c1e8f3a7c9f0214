#include "cfin/cfgt.hpp"

#include <stdexcept>

namespace cfin {

IgpParams make_igp(ParamStore& store, const std::string& name, std::size_t channels,
                   std::size_t groups, Rng& rng) {
  return IgpParams{make_cgm(store, name + ".wide", channels, channels, 3, groups, rng),
                   make_cgm(store, name + ".point", channels, channels, 1, groups, rng)};
}

Var igp_forward(const Var& x, const IgpParams& p) {
  const Shape& s = x.shape();
  if (s[2] < 3 || s[3] < 3) throw ShapeError("igp: spatial dims below 3x3: " + to_string(s));
  return add(cgm_forward(gelu(cgm_forward(x, p.wide)), p.point), x);
}

LayerNormParams make_layer_norm(ParamStore& store, const std::string& name, std::size_t channels) {
  return LayerNormParams{store.add(name + ".gain", Tensor({1, channels, 1, 1}, 1.0)),
                         store.add(name + ".bias", Tensor({1, channels, 1, 1}, 0.0))};
}

Var apply(const LayerNormParams& ln, const Var& x) {
  return layer_norm_channels(x, ln.gain, ln.bias, kLayerNormEps);
}

CfgtParams make_cfgt(ParamStore& store, const std::string& name, std::size_t channels,
                     std::size_t heads, std::size_t k1, std::size_t k2, bool cross_k,
                     std::size_t groups, Rng& rng) {
  if (k1 % 2 == 0 || k2 % 2 == 0) throw std::invalid_argument(name + ": receptive sizes must be odd");
  const std::size_t second = cross_k ? k2 : k1;
  if (cross_k && k1 == k2) {
    throw std::invalid_argument(name + ": cross receptive fields need k1 != k2");
  }
  CfgtParams p;
  p.cga1 = make_cga(store, name + ".cga1", channels, heads, k1, groups, rng);
  p.cga2 = make_cga(store, name + ".cga2", channels, heads, second, groups, rng);
  p.igp = make_igp(store, name + ".igp", channels, groups, rng);
  p.norm1 = make_layer_norm(store, name + ".norm1", channels);
  p.norm2 = make_layer_norm(store, name + ".norm2", channels);
  p.norm3 = make_layer_norm(store, name + ".norm3", channels);
  return p;
}

Var cfgt_forward(const Var& t_in, const CfgtParams& p, const CfgtFlags& flags, CfgtTrace* trace) {
  const CgaResult first = cga_forward(t_in, p.cga1);
  const Var med1 = add(apply(p.norm1, first.output), t_in);
  const Var& query_src = flags.second_query_from_med ? med1 : t_in;
  const CgaResult second = cga_forward(query_src, p.cga2,
                                       flags.kv_pass ? std::optional<KeyValue>(first.used) : std::nullopt);
  const Var med2 = add(apply(p.norm2, second.output), med1);
  const Var out = add(apply(p.norm3, igp_forward(med2, p.igp)), med2);
  if (trace) *trace = CfgtTrace{first.used, med1, med2};
  return out;
}

std::uint64_t cfgt_macs(const CfgtParams& p, std::size_t h, std::size_t w) {
  return cga_macs(p.cga1, h, w) + cga_macs(p.cga2, h, w) + cgm_macs(p.igp.wide, h, w) +
         cgm_macs(p.igp.point, h, w);
}

}  // namespace cfin
