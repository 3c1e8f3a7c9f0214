#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfin/image.hpp"
#include "cfin/model.hpp"

namespace cfin {

struct TrainConfig {
  double lr_init = 5e-4;
  double lr_final = 6.25e-6;
  std::size_t steps = 500;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Optional outputs. Empty paths disable them.
  std::string loss_csv;
  std::string checkpoint_path;
  std::size_t checkpoint_every = 0;  // 0: only at the end

  void validate() const;
};

/// lr_final + (lr_init - lr_final) * (1 + cos(pi * step / steps)) / 2
double cosine_lr(std::size_t step, const TrainConfig& cfg);

/// Adam with bias correction over every tensor of a ParamStore.
class Adam {
 public:
  Adam(const ParamStore& params, double beta1, double beta2, double eps);

  /// Applies one update from the current gradients. Parameters without a
  /// gradient are left untouched.
  void step(double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct TrainRecord {
  std::size_t step;
  double lr;
  double loss;
};

/// Runs cfg.steps Adam steps of L1 training on batches from `sampler`.
/// Deterministic for a fixed model, sampler and cfg.seed.
std::vector<TrainRecord> train(Model& model, PatchSampler& sampler, const TrainConfig& cfg,
                               const std::function<void(const TrainRecord&)>& on_step = {});

/// Trailing moving average with the given window (shorter at the start).
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

struct ToyExperiment {
  std::size_t train_images = 64;
  std::size_t held_out_images = 16;
  std::size_t hr_size = 32;
  std::uint64_t data_seed = 11;
  std::uint64_t held_out_seed = 12345;
  std::uint64_t model_seed = 0;
  std::size_t smoothing = 50;
};

struct ToyOutcome {
  std::vector<TrainRecord> history;
  double initial_smoothed = 0.0;  // mean of the first `smoothing` losses
  double final_smoothed = 0.0;    // mean of the last `smoothing` losses
  double model_psnr = 0.0;        // held-out Y PSNR, border shave = scale
  double bicubic_psnr = 0.0;
};

/// Trains `model` on synthetic textures (whole LR images as patches) and
/// scores it against bicubic upscaling on a disjoint held-out set.
ToyOutcome run_toy_experiment(Model& model, const ToyExperiment& exp, const TrainConfig& cfg,
                              const std::function<void(const TrainRecord&)>& on_step = {});

}  // namespace cfin
