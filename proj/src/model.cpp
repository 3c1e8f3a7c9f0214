#include "cfin/model.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

namespace cfin {

ModelConfig ModelConfig::standard(std::size_t scale) {
  ModelConfig c;
  c.scale = scale;
  return c;
}

ModelConfig ModelConfig::toy(std::size_t scale) {
  ModelConfig c;
  c.scale = scale;
  c.base_channels = 16;
  c.ct_blocks = 1;
  c.loop_count = 1;
  c.transformer_channels = 16;
  c.heads = 2;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("invalid config: " + m); };
  if (scale < 2 || scale > 4) fail("scale must be 2, 3 or 4");
  if (base_channels == 0 || transformer_channels == 0) fail("channel widths must be positive");
  if (ct_blocks == 0 || loop_count == 0) fail("ct_blocks and loop_count must be positive");
  if (heads == 0 || transformer_channels % heads != 0) fail("transformer_channels must be divisible by heads");
  if (groups == 0 || transformer_channels % groups != 0) fail("transformer_channels must be divisible by groups");
  if (k1 % 2 == 0 || k2 % 2 == 0) fail("receptive sizes k1, k2 must be odd");
  if (cross_k && k1 == k2) fail("cross receptive fields need k1 != k2");
  if (ca_reduction == 0 || base_channels % ca_reduction != 0) fail("base_channels must be divisible by ca_reduction");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(lrelu_slope >= 0.0)) fail("lrelu_slope must be non-negative");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"scale", c.scale},
      {"base_channels", c.base_channels},
      {"ct_blocks", c.ct_blocks},
      {"loop_count", c.loop_count},
      {"transformer_channels", c.transformer_channels},
      {"heads", c.heads},
      {"k1", c.k1},
      {"k2", c.k2},
      {"groups", c.groups},
      {"ca_reduction", c.ca_reduction},
      {"lrelu_slope", c.lrelu_slope},
      {"tau", c.tau},
      {"mask", c.mask},
      {"mask_mode", to_string(c.mask_mode)},
      {"kv_pass", c.kv_pass},
      {"cross_k", c.cross_k},
      {"updown_branch", c.updown_branch},
      {"second_query_from_med", c.second_query_from_med},
      {"precision", c.precision == Precision::f64 ? "f64" : "f32"},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("scale").get_to(c.scale);
  j.at("base_channels").get_to(c.base_channels);
  j.at("ct_blocks").get_to(c.ct_blocks);
  j.at("loop_count").get_to(c.loop_count);
  j.at("transformer_channels").get_to(c.transformer_channels);
  j.at("heads").get_to(c.heads);
  j.at("k1").get_to(c.k1);
  j.at("k2").get_to(c.k2);
  j.at("groups").get_to(c.groups);
  j.at("ca_reduction").get_to(c.ca_reduction);
  j.at("lrelu_slope").get_to(c.lrelu_slope);
  j.at("tau").get_to(c.tau);
  j.at("mask").get_to(c.mask);
  c.mask_mode = mask_mode_from_string(j.at("mask_mode").get<std::string>());
  j.at("kv_pass").get_to(c.kv_pass);
  j.at("cross_k").get_to(c.cross_k);
  j.at("updown_branch").get_to(c.updown_branch);
  j.at("second_query_from_med").get_to(c.second_query_from_med);
  const auto prec = j.at("precision").get<std::string>();
  if (prec == "f64") c.precision = Precision::f64;
  else if (prec == "f32") c.precision = Precision::f32;
  else throw std::invalid_argument("unknown precision: " + prec);
}

std::string canonical_json(const ModelConfig& c) {
  return nlohmann::json(c).dump();
}

Model Model::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  Rng rng(seed);
  const std::size_t C = config.base_channels;
  const std::size_t T = config.transformer_channels;
  const std::size_t s2 = config.scale * config.scale;
  const ConvGeom same3{1, 1, 1};

  RifuOptions rifu;
  rifu.mask_enabled = config.mask;
  rifu.mask_mode = config.mask_mode;
  rifu.tau = config.tau;
  rifu.lrelu_slope = config.lrelu_slope;
  rifu.ca_reduction = config.ca_reduction;

  m.shallow_ = make_conv(m.params_, "shallow", {3, C, 1}, rng);
  for (std::size_t i = 0; i < config.ct_blocks; ++i) {
    const std::string name = "blocks." + std::to_string(i);
    CtBlock b;
    b.ciam = make_ciam(m.params_, name + ".ciam", C, rifu, config.updown_branch, rng);
    b.expand = make_conv(m.params_, name + ".expand", {C, T, 1}, rng);
    b.transformer = make_cfgt(m.params_, name + ".cfgt", T, config.heads, config.k1, config.k2,
                              config.cross_k, config.groups, rng);
    b.reduce = make_conv(m.params_, name + ".reduce", {T, C, 1}, rng);
    m.blocks_.push_back(std::move(b));
  }
  m.rec_deep_ = make_conv(m.params_, "rec_deep", {C, 3 * s2, 3, same3}, rng);
  m.rec_skip_ = make_conv(m.params_, "rec_skip", {3, 3 * s2, 3, same3}, rng);
  return m;
}

Var Model::skip_path(const Var& lr) const {
  return pixel_shuffle(rec_skip_(lr), config_.scale);
}

Var Model::forward(const Var& lr, const ForwardOptions& opts) const {
  const Shape& s = lr.shape();
  if (s[1] != 3) throw ShapeError("forward: expected an RGB input, got " + to_string(s));
  if (s[2] < 8 || s[3] < 8) throw ShapeError("forward: input must be at least 8x8, got " + to_string(s));
  const CfgtFlags flags{config_.kv_pass, config_.second_query_from_med};
  Var x = shallow_(lr);
  for (const CtBlock& b : blocks_) {
    for (std::size_t l = 0; l < config_.loop_count; ++l) {
      const Var conv = ciam_forward(x, b.ciam, opts);
      x = add(b.reduce(cfgt_forward(b.expand(conv), b.transformer, flags)), x);
    }
  }
  return add(pixel_shuffle(rec_deep_(x), config_.scale), skip_path(lr));
}

Tensor Model::infer(const Tensor& lr) const {
  NoGradGuard guard;
  ForwardOptions opts;
  opts.mode = Mode::eval;
  return forward(constant(lr), opts).value();
}

std::uint64_t Model::count_multi_adds(std::size_t out_h, std::size_t out_w) const {
  const std::size_t s = config_.scale;
  const std::size_t h = out_h / s, w = out_w / s;
  std::uint64_t total = shallow_.macs(h, w);
  for (const CtBlock& b : blocks_) {
    std::uint64_t block = 0;
    for (const RifuParams* r : {&b.ciam.rifu1, &b.ciam.rifu2, &b.ciam.rifu3}) {
      block += r->conv_in.macs(h, w) + r->conv_out.macs(h, w);
      if (r->proj_mask) block += r->proj_mask->macs(h, w);
      block += r->ca.down.macs(1, 1) + r->ca.up.macs(1, 1);
    }
    if (b.ciam.updown_branch) {
      block += b.ciam.up.macs(h, w) + b.ciam.down.macs(2 * h, 2 * w);
    }
    block += b.expand.macs(h, w) + cfgt_macs(b.transformer, h, w) + b.reduce.macs(h, w);
    total += block * config_.loop_count;
  }
  total += rec_deep_.macs(h, w) + rec_skip_.macs(h, w);
  return total;
}

}  // namespace cfin
