#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cfin/autograd.hpp"
#include "cfin/ops.hpp"

namespace cfin {

using Rng = std::mt19937_64;

/// Ordered registry of named learnable tensors. Names are unique.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
  std::optional<Var> find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Var>> items_;
};

/// Uniform(-bound, bound), bound = sqrt(2 / (1 + a^2)) * sqrt(3 / fan_in).
/// The default a = sqrt(5) gives bound = 1 / sqrt(fan_in).
Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng, double a = std::sqrt(5.0));

enum class Mode { train, eval };

/// How the discrete RIFU mask propagates gradients.
enum class MaskGrad {
  straight_through,  // forward hard one-hot, backward through the soft probabilities
  frozen,            // forward hard one-hot, treated as a constant
  relaxed,           // forward uses the soft probability itself
};

/// Records the hard masks of a forward pass so that later passes can replay them.
struct MaskTape {
  enum class Use { record, replay } use = Use::record;
  std::vector<Tensor> masks;
  std::size_t cursor = 0;
};

struct ForwardOptions {
  Mode mode = Mode::eval;
  Rng* rng = nullptr;  // required for Gumbel noise in train mode
  MaskGrad mask_grad = MaskGrad::straight_through;
  MaskTape* mask_tape = nullptr;
  // Every RIFU appends its (B, M, H, W) one-hot selection here when set.
  std::vector<Tensor>* mask_log = nullptr;
};

/// Convolution with optional bias and optional weight normalization.
struct ConvLayer {
  Var kernel;  // direction v when weight-normed, else the kernel itself
  std::optional<Var> gain;
  std::optional<Var> bias;
  ConvGeom geom;
  bool transposed = false;

  Var effective_kernel() const;
  Var operator()(const Var& x) const;

  std::size_t out_channels() const;
  std::size_t in_channels() const;
  std::size_t kernel_size() const { return kernel.shape()[2]; }
  /// Multiply-accumulates for an input of spatial size h x w.
  std::uint64_t macs(std::size_t h, std::size_t w) const;
};

struct ConvSpec {
  std::size_t c_in = 0, c_out = 0, k = 1;
  ConvGeom geom{};
  bool bias = true;
  bool weight_norm = false;
  bool transposed = false;
};

ConvLayer make_conv(ParamStore& store, const std::string& name, const ConvSpec& spec, Rng& rng);

/// Multiply-accumulates of a standard convolution producing out_h x out_w.
std::uint64_t conv_macs(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t groups,
                        std::size_t out_h, std::size_t out_w);

}  // namespace cfin
