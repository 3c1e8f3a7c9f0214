#include "cfin/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "cfin/archive.hpp"
#include "cfin/metrics.hpp"

namespace cfin {

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("train: steps must be at least 1");
  if (batch < 1) throw std::invalid_argument("train: batch must be at least 1");
  if (!(lr_final < lr_init)) throw std::invalid_argument("train: lr_final must be below lr_init");
}

double cosine_lr(std::size_t step, const TrainConfig& cfg) {
  const double t = static_cast<double>(step) / static_cast<double>(cfg.steps);
  return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * t));
}

Adam::Adam(const ParamStore& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, var] : params.items()) {
    params_.push_back(var);
    m_.emplace_back(var.shape());
    v_.emplace_back(var.shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& g = params_[i].grad();
    if (g.empty()) continue;
    Tensor w = params_[i].value();
    auto m = m_[i].data();
    auto v = v_[i].data();
    auto wd = w.data();
    for (std::size_t j = 0; j < wd.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      wd[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
    params_[i].assign(std::move(w));
  }
}

std::vector<TrainRecord> train(Model& model, PatchSampler& sampler, const TrainConfig& cfg,
                               const std::function<void(const TrainRecord&)>& on_step) {
  cfg.validate();
  Adam adam(model.params(), cfg.beta1, cfg.beta2, cfg.eps);
  Rng noise(cfg.seed);
  ForwardOptions opts;
  opts.mode = Mode::train;
  opts.rng = &noise;

  std::ofstream csv;
  if (!cfg.loss_csv.empty()) {
    csv.open(cfg.loss_csv);
    if (!csv) throw std::runtime_error("cannot open loss CSV '" + cfg.loss_csv + "'");
    csv << "step,lr,loss\n" << std::setprecision(17);
  }

  std::vector<TrainRecord> history;
  history.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const PatchPair batch = sampler.sample_batch(cfg.batch);
    const double lr = cosine_lr(step, cfg);
    model.params().zero_grad();
    double loss_value = 0.0;
    try {
      const Var pred = model.forward(constant(batch.lr), opts);
      const Var loss = l1_loss(pred, constant(batch.hr));
      loss_value = loss.value()[0];
      backward(loss);
    } catch (const NumericError& e) {
      throw TrainingError(step, std::string("non-finite value, aborting: ") + e.what());
    }
    adam.step(lr);
    const TrainRecord rec{step, lr, loss_value};
    history.push_back(rec);
    if (csv.is_open()) csv << rec.step << ',' << rec.lr << ',' << rec.loss << '\n';
    if (on_step) on_step(rec);
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      save(model, cfg.checkpoint_path);
    }
  }
  if (!cfg.checkpoint_path.empty()) save(model, cfg.checkpoint_path);
  return history;
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smooth: window must be positive");
  std::vector<double> out(values.size());
  double running = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    running += values[i];
    if (i >= window) running -= values[i - window];
    out[i] = running / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

ToyOutcome run_toy_experiment(Model& model, const ToyExperiment& exp, const TrainConfig& cfg,
                              const std::function<void(const TrainRecord&)>& on_step) {
  const std::size_t scale = model.config().scale;
  if (exp.hr_size % scale) throw std::invalid_argument("toy experiment: HR size not divisible by the scale");
  Rng data(exp.data_seed), held(exp.held_out_seed);
  std::vector<Tensor> train_set, test_set;
  for (std::size_t i = 0; i < exp.train_images; ++i) train_set.push_back(synthetic_texture(exp.hr_size, exp.hr_size, data));
  for (std::size_t i = 0; i < exp.held_out_images; ++i) test_set.push_back(synthetic_texture(exp.hr_size, exp.hr_size, held));

  PatchSampler sampler(std::move(train_set), exp.hr_size / scale, scale, exp.data_seed + 1);
  ToyOutcome out;
  out.history = train(model, sampler, cfg, on_step);

  const std::size_t window = std::min(exp.smoothing, out.history.size());
  for (std::size_t i = 0; i < window; ++i) {
    out.initial_smoothed += out.history[i].loss / static_cast<double>(window);
    out.final_smoothed += out.history[out.history.size() - window + i].loss / static_cast<double>(window);
  }
  for (const Tensor& hr : test_set) {
    const Tensor lr = bicubic_resize(hr, 1.0 / static_cast<double>(scale));
    out.model_psnr += evaluate_y(model.infer(lr), hr, scale).psnr / static_cast<double>(test_set.size());
    out.bicubic_psnr += evaluate_y(bicubic_resize(lr, static_cast<double>(scale)), hr, scale).psnr /
                        static_cast<double>(test_set.size());
  }
  return out;
}

}  // namespace cfin
