#include <CLI11.hpp>

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>

#include "cfin/archive.hpp"
#include "cfin/gradcheck.hpp"
#include "cfin/image.hpp"
#include "cfin/metrics.hpp"
#include "cfin/model.hpp"
#include "cfin/trainer.hpp"

using namespace cfin;

namespace {

void apply_thread_cap() {
  if (const char* env = std::getenv("CFIN_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw std::invalid_argument("CFIN_THREADS must be a positive integer");
    set_num_threads(static_cast<int>(n));
  }
}

int cmd_init(std::size_t scale, std::uint64_t seed, const std::string& out) {
  const Model model = Model::build(ModelConfig::standard(scale), seed);
  save(model, out);
  std::cout << "params=" << model.count_params() << '\n';
  std::cout << "config=" << canonical_json(model.config()) << '\n';
  return 0;
}

int cmd_infer(const std::string& model_path, const std::string& in, const std::string& out) {
  const Model model = load(model_path);
  const Tensor sr = model.infer(to_tensor(png_read(in)));
  png_write(from_tensor(sr), out);
  std::cout << "wrote " << out << " (" << sr.width() << "x" << sr.height() << ")\n";
  return 0;
}

int cmd_metrics(const std::string& sr_path, const std::string& hr_path, std::size_t shave, const std::string& space) {
  const Tensor sr = to_tensor(png_read(sr_path)), hr = to_tensor(png_read(hr_path));
  const Quality q = space == "rgb" ? Quality{psnr(sr, hr, shave), ssim(sr, hr, shave)} : evaluate_y(sr, hr, shave);
  std::cout << "PSNR=";
  if (std::isinf(q.psnr)) std::cout << "inf";
  else std::cout << std::fixed << std::setprecision(2) << q.psnr;
  std::cout << " SSIM=" << std::fixed << std::setprecision(4) << q.ssim << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  std::vector<std::string> suites;
  if (module.empty()) suites = gradcheck_suites();
  else suites.push_back(module);
  bool ok = true;
  for (const auto& s : suites) {
    const GradcheckResult r = run_gradcheck(s);
    std::cout << std::left << std::setw(6) << s << " worst_rel_err=" << std::scientific << std::setprecision(3)
              << r.worst << " checked=" << r.checked << " kinks_skipped=" << r.kinks
              << (r.passed ? " PASS" : " FAIL") << '\n';
    if (!r.passed) std::cout << "       at " << r.worst_where << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_params(std::size_t scale, std::size_t out_h, std::size_t out_w) {
  const Model model = Model::build(ModelConfig::standard(scale), 0);
  std::cout << "scale=" << scale << " params=" << model.count_params() << " multi_adds=" << std::fixed
            << std::setprecision(2) << static_cast<double>(model.count_multi_adds(out_h, out_w)) / 1e9
            << "G@" << out_w << "x" << out_h << '\n';
  std::cout << "config=" << canonical_json(model.config()) << '\n';
  return 0;
}

int cmd_ablate(const std::string& flag, bool on, const std::string& mask_mode, std::uint64_t seed) {
  ModelConfig cfg = ModelConfig::toy(2);
  if (flag == "mask") cfg.mask = on;
  else if (flag == "gumbel") cfg.mask_mode = on ? MaskMode::gumbel : MaskMode::softmax;
  else if (flag == "kv") cfg.kv_pass = on;
  else if (flag == "cross") cfg.cross_k = on;
  else if (flag == "updown") cfg.updown_branch = on;
  else throw std::invalid_argument("unknown ablation flag '" + flag + "'");
  if (!mask_mode.empty()) cfg.mask_mode = mask_mode_from_string(mask_mode);
  Model model = Model::build(cfg, seed);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor lr({2, 3, 12, 12});
  for (double& v : lr.data()) v = u(rng);
  Tensor hr({2, 3, 24, 24});
  for (double& v : hr.data()) v = u(rng);
  ForwardOptions opts;
  opts.mode = Mode::train;
  opts.rng = &rng;
  const Var loss = l1_loss(model.forward(constant(lr), opts), constant(hr));
  backward(loss);
  std::cout << "config=" << canonical_json(cfg) << '\n';
  std::cout << "params=" << model.count_params() << " loss=" << std::setprecision(6) << loss.value()[0]
            << " forward+backward ok\n";
  return 0;
}

int cmd_train_toy(std::size_t steps, std::size_t batch, std::uint64_t seed, const std::string& csv,
                  const std::string& out) {
  Model model = Model::build(ModelConfig::toy(2), seed);
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch = batch;
  cfg.seed = seed;
  cfg.loss_csv = csv;
  cfg.checkpoint_path = out;
  cfg.checkpoint_every = 100;
  ToyExperiment exp;
  exp.model_seed = seed;
  const ToyOutcome r = run_toy_experiment(model, exp, cfg, [&](const TrainRecord& rec) {
    if (rec.step % 50 == 0 || rec.step + 1 == steps) {
      std::cout << "step " << rec.step << " lr=" << std::scientific << std::setprecision(3) << rec.lr
                << " loss=" << std::fixed << std::setprecision(5) << rec.loss << '\n';
    }
  });
  std::cout << std::fixed << std::setprecision(5) << "smoothed_l1 initial=" << r.initial_smoothed
            << " final=" << r.final_smoothed << '\n'
            << std::setprecision(3) << "held_out_psnr_y model=" << r.model_psnr << " bicubic=" << r.bicubic_psnr
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CFIN super-resolution toolkit"};
  app.require_subcommand(1);

  auto* init = app.add_subcommand("init", "Write a freshly initialized default model");
  std::size_t init_scale = 4;
  std::uint64_t init_seed = 0;
  std::string init_out;
  init->add_option("--scale", init_scale, "Upscale factor (2, 3 or 4)")->check(CLI::Range(2, 4));
  init->add_option("--seed", init_seed, "Initialization seed");
  init->add_option("--out", init_out, "Output weight archive")->required();

  auto* infer = app.add_subcommand("infer", "Super-resolve a PNG");
  std::string model_path, in_path, out_path;
  infer->add_option("--model", model_path, "Weight archive")->required();
  infer->add_option("--in", in_path, "Low-resolution PNG")->required();
  infer->add_option("--out", out_path, "Output PNG")->required();

  auto* train = app.add_subcommand("train-toy", "Train the toy model on synthetic textures");
  std::size_t steps = 500, batch = 8;
  std::uint64_t train_seed = 0;
  std::string csv = "loss.csv", ckpt = "toy.cfin";
  train->add_option("--steps", steps, "Adam steps")->capture_default_str();
  train->add_option("--batch", batch, "Batch size")->capture_default_str();
  train->add_option("--seed", train_seed, "Model and noise seed")->capture_default_str();
  train->add_option("--loss-csv", csv, "Loss history (step,lr,loss)")->capture_default_str();
  train->add_option("--out", ckpt, "Checkpoint archive")->capture_default_str();

  auto* metrics = app.add_subcommand("metrics", "Y-channel PSNR and SSIM of two PNGs");
  std::string sr_path, hr_path;
  std::size_t shave = 0;
  std::string space = "y";
  metrics->add_option("--sr", sr_path, "Restored image")->required();
  metrics->add_option("--hr", hr_path, "Reference image")->required();
  metrics->add_option("--shave", shave, "Border pixels ignored on every side")->capture_default_str();
  metrics->add_option("--space", space, "y (luma) or rgb")
      ->check(CLI::IsMember({"y", "rgb"}))
      ->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  std::string module;
  grad->add_option("--module", module, "One suite (default: all)")
      ->check(CLI::IsMember({"rifu", "ciam", "cgm", "cga", "cfgt", "model"}));

  auto* params = app.add_subcommand("params", "Parameter and multiply-add counts of the default model");
  std::size_t p_scale = 4, out_h = 720, out_w = 1280;
  params->add_option("--scale", p_scale, "Upscale factor")->check(CLI::Range(2, 4))->capture_default_str();
  params->add_option("--height", out_h, "Output height for multiply-adds")->capture_default_str();
  params->add_option("--width", out_w, "Output width for multiply-adds")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Run one ablation configuration end to end on the toy model");
  std::string flag, mask_mode;
  bool on = false, off = false;
  std::uint64_t ablate_seed = 0;
  ablate->add_option("--flag", flag, "mask | gumbel | kv | cross | updown")
      ->required()
      ->check(CLI::IsMember({"mask", "gumbel", "kv", "cross", "updown"}));
  auto* on_flag = ablate->add_flag("--on", on, "Enable the component");
  auto* off_flag = ablate->add_flag("--off", off, "Disable the component");
  on_flag->excludes(off_flag);
  ablate->add_option("--mask-mode", mask_mode, "Override the mask relaxation")
      ->check(CLI::IsMember({"gumbel", "softmax", "maxpool"}));
  ablate->add_option("--seed", ablate_seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    apply_thread_cap();
    if (*init) return cmd_init(init_scale, init_seed, init_out);
    if (*infer) return cmd_infer(model_path, in_path, out_path);
    if (*train) return cmd_train_toy(steps, batch, train_seed, csv, ckpt);
    if (*metrics) return cmd_metrics(sr_path, hr_path, shave, space);
    if (*grad) return cmd_gradcheck(module);
    if (*params) return cmd_params(p_scale, out_h, out_w);
    if (*ablate) {
      if (!on && !off) throw std::invalid_argument("ablate needs --on or --off");
      return cmd_ablate(flag, on, mask_mode, ablate_seed);
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 0;
}
