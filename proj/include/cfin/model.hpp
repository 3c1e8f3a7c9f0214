#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cfin/cfgt.hpp"
#include "cfin/conv_stage.hpp"

namespace cfin {

enum class Precision { f64, f32 };

/// Architecture hyper-parameters and ablation switches.
struct ModelConfig {
  std::size_t scale = 4;
  std::size_t base_channels = 48;
  std::size_t ct_blocks = 4;     // physical blocks
  std::size_t loop_count = 2;    // executions of each physical block
  std::size_t transformer_channels = 12;
  std::size_t heads = 4;
  std::size_t k1 = 3;
  std::size_t k2 = 5;
  std::size_t groups = 4;        // grouped linear in the CGM channel branch
  std::size_t ca_reduction = 4;
  double lrelu_slope = 0.05;
  double tau = 1.0;
  // ablations
  bool mask = true;
  MaskMode mask_mode = MaskMode::gumbel;
  bool kv_pass = true;
  bool cross_k = true;
  bool updown_branch = true;
  bool second_query_from_med = false;
  Precision precision = Precision::f64;

  /// Default network for the given upscale factor.
  static ModelConfig standard(std::size_t scale);
  /// Small network used for desk-scale training: C=16, one block, one loop, two heads.
  static ModelConfig toy(std::size_t scale = 2);

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Canonical JSON text (sorted keys, no whitespace).
std::string canonical_json(const ModelConfig& c);

struct CtBlock {
  CiamParams ciam;
  ConvLayer expand;   // 1x1, C -> transformer width
  CfgtParams transformer;
  ConvLayer reduce;   // 1x1, transformer width -> C
};

/// The full super-resolution network. Parameters live in `params()`; the
/// block structs hold handles into it. Move-only because copies would share
/// parameter storage.
class Model {
 public:
  /// Deterministic initialization: the same config and seed give bit-identical weights.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<CtBlock>& blocks() const { return blocks_; }
  const ConvLayer& shallow() const { return shallow_; }
  const ConvLayer& rec_deep() const { return rec_deep_; }
  const ConvLayer& rec_skip() const { return rec_skip_; }

  /// (B, 3, H, W) in [0, 1] -> (B, 3, scale*H, scale*W).
  Var forward(const Var& lr, const ForwardOptions& opts) const;
  /// The linear LR skip path alone: pixel_shuffle(rec_skip(lr)).
  Var skip_path(const Var& lr) const;
  /// Eval-mode forward without recording a graph.
  Tensor infer(const Tensor& lr) const;

  std::size_t count_params() const { return params_.scalar_count(); }
  /// Multiply-accumulates for one forward producing an out_h x out_w image.
  std::uint64_t count_multi_adds(std::size_t out_h, std::size_t out_w) const;

  /// Executions of the CT stage per forward.
  std::size_t stage_executions() const { return blocks_.size() * config_.loop_count; }

 private:
  Model() = default;

  ModelConfig config_;
  ParamStore params_;
  ConvLayer shallow_;
  std::vector<CtBlock> blocks_;
  ConvLayer rec_deep_, rec_skip_;
};

}  // namespace cfin
