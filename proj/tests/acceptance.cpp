#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "cfin/archive.hpp"
#include "cfin/gradcheck.hpp"
#include "cfin/image.hpp"
#include "cfin/metrics.hpp"
#include "cfin/trainer.hpp"
#include "test_util.hpp"

using namespace cfin;
using cfin::testing::random_tensor;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Verdict param_budget() {
  const auto start = std::chrono::steady_clock::now();
  const std::pair<std::size_t, double> targets[] = {{2, 675e3}, {3, 681e3}, {4, 699e3}};
  Verdict v{true, ""};
  for (const auto& [scale, target] : targets) {
    const Model m = Model::build(ModelConfig::standard(scale), 0);
    const double n = static_cast<double>(m.count_params());
    v.pass = v.pass && std::abs(n - target) <= 0.1 * target;
    v.detail += "x" + std::to_string(scale) + "=" + std::to_string(m.count_params()) + " (" +
                fmt("%+.1f%%", 100.0 * (n - target) / target) + ") ";
    if (scale == 4) v.detail += "multi_adds@1280x720=" + fmt("%.1fG", m.count_multi_adds(720, 1280) / 1e9) + " (reported 31.2G) ";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.pass = v.pass && secs < 5.0;
  v.detail += fmt("%.2fs", secs);
  return v;
}

Verdict gradient_oracle() {
  Verdict v{true, ""};
  for (const std::string& suite : gradcheck_suites()) {
    const GradcheckResult r = run_gradcheck(suite);
    v.pass = v.pass && r.passed;
    v.detail += suite + "=" + fmt("%.1e", r.worst) + " ";
  }
  return v;
}

Verdict gumbel_law() {
  Tensor logits({1, 3, 1, 1});
  logits[0] = 1;
  logits[1] = 0;
  logits[2] = -1;
  const Tensor p = softmax(logits, 1);
  Rng rng(2024);
  double counts[3] = {0, 0, 0};
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor hard = one_hot_argmax(gumbel_softmax(logits, 1.0, &rng));
    for (std::size_t m = 0; m < 3; ++m) counts[m] += hard[m];
  }
  Verdict v{true, ""};
  for (std::size_t m = 0; m < 3; ++m) {
    const double f = counts[m] / n;
    v.pass = v.pass && std::abs(f - p[m]) <= 0.01;
    v.detail += fmt("%.4f", f) + "/" + fmt("%.4f", p[m]) + " ";
  }
  return v;
}

Verdict mask_discreteness() {
  Rng rng(7);
  ParamStore store;
  RifuOptions options;
  const RifuParams p = make_rifu(store, "rifu", 16, options, rng);
  std::size_t pixels = 0, bad = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<Tensor> log;
    ForwardOptions opts;
    opts.mode = Mode::train;
    opts.rng = &rng;
    opts.mask_log = &log;
    NoGradGuard guard;
    rifu_forward(constant(random_tensor({2, 16, 8, 8}, rng)), p, opts);
    const Tensor& hard = log.at(0);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t h = 0; h < 8; ++h)
        for (std::size_t w = 0; w < 8; ++w) {
          double total = 0.0;
          bool binary = true;
          for (std::size_t c = 0; c < kMaskChannels; ++c) {
            const double m = hard.at(b, c, h, w);
            binary = binary && (m == 0.0 || m == 1.0);
            total += m;
          }
          ++pixels;
          if (!binary || total != 1.0) ++bad;
        }
  }
  // eval: identical outputs, with or without an rng, and the rng untouched
  const Var x = constant(random_tensor({2, 16, 8, 8}, rng));
  ForwardOptions eval;
  const Tensor a = rifu_forward(x, p, eval).value();
  Rng probe(99), reference(99);
  eval.rng = &probe;
  const Tensor b = rifu_forward(x, p, eval).value();
  const bool deterministic = a == b && probe() == reference();
  return {bad == 0 && deterministic,
          std::to_string(pixels) + " pixels, " + std::to_string(bad) + " not one-hot, eval " +
              (deterministic ? "deterministic" : "NOT deterministic")};
}

Verdict attention_shape() {
  Rng rng(5);
  ParamStore store;
  const CgaParams p = make_cga(store, "cga", 48, 4, 3, 4, rng);
  const CgaResult r = cga_forward(constant(random_tensor({2, 48, 8, 8}, rng)), p);
  const Shape& s = r.attention.shape();
  double worst = 0.0;
  for (std::size_t b = 0; b < s[0]; ++b)
    for (std::size_t h = 0; h < s[1]; ++h)
      for (std::size_t i = 0; i < s[2]; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < s[3]; ++j) row += r.attention.value().at(b, h, i, j);
        worst = std::max(worst, std::abs(row - 1.0));
      }
  const bool shape_ok = s == Shape{2, 4, 12, 12};
  return {shape_ok && worst <= 1e-10, "attention " + to_string(s) + ", worst row error " + fmt("%.1e", worst)};
}

Verdict ablations() {
  std::size_t ok = 0, total = 0;
  std::string failures;
  for (bool mask : {true, false})
    for (MaskMode mode : {MaskMode::gumbel, MaskMode::softmax, MaskMode::maxpool})
      for (bool kv : {true, false})
        for (bool cross : {true, false}) {
          ++total;
          ModelConfig c = ModelConfig::toy(2);
          c.mask = mask;
          c.mask_mode = mode;
          c.kv_pass = kv;
          c.cross_k = cross;
          if (!cross) c.k2 = c.k1;
          try {
            Model m = Model::build(c, 0);
            Rng rng(total);
            ForwardOptions opts;
            opts.mode = Mode::train;
            opts.rng = &rng;
            const Tensor lr = random_tensor({2, 3, 8, 8}, rng, 0, 1);
            const Tensor hr = random_tensor({2, 3, 16, 16}, rng, 0, 1);
            backward(l1_loss(m.forward(constant(lr), opts), constant(hr)));
            bool all_grads = true;
            for (const auto& item : m.params().items()) all_grads = all_grads && !item.second.grad().empty();
            if (all_grads) ++ok;
            else failures += " missing-grad:" + canonical_json(c);
          } catch (const std::exception& e) {
            failures += std::string(" ") + e.what();
          }
        }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) + " configurations" + failures};
}

Verdict toy_learning() {
  const auto start = std::chrono::steady_clock::now();
  Model model = Model::build(ModelConfig::toy(2), 0);
  const ToyOutcome o = run_toy_experiment(model, ToyExperiment{}, TrainConfig{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double drop = 1.0 - o.final_smoothed / o.initial_smoothed;
  const double gain = o.model_psnr - o.bicubic_psnr;
  const bool a = drop >= 0.5, b = gain >= 0.1;
  return {a && b, std::string("(a) ") + (a ? "PASS" : "FAIL") + " smoothed L1 " + fmt("%.4f", o.initial_smoothed) +
                      " -> " + fmt("%.4f", o.final_smoothed) + fmt(" (%.1f%% drop)", 100 * drop) + "; (b) " +
                      (b ? "PASS" : "FAIL") + " held-out Y PSNR " + fmt("%.2f", o.model_psnr) + " vs bicubic " +
                      fmt("%.2f", o.bicubic_psnr) + fmt(" dB (%+.2f dB); ", gain) + fmt("%.0fs", secs)};
}

std::vector<std::uint8_t> replace_config(const std::vector<std::uint8_t>& bytes, const ModelConfig& c) {
  const auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
    return v;
  };
  const std::string text = canonical_json(c);
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(text.size() >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 12 + u32(8), bytes.end());
  return out;
}

Verdict serialization() {
  using Kind = ArchiveError::Kind;
  Rng rng(31);
  std::size_t round_trips = 0, corruptions = 0, wrong = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) {
    ModelConfig c = ModelConfig::toy(2 + rng() % 3);
    c.precision = rng() % 2 ? Precision::f32 : Precision::f64;
    c.mask = rng() % 4 != 0;
    Model m = Model::build(c, rng());
    for (const auto& item : m.params().items()) {
      Var v = item.second;
      v.assign(random_tensor(v.shape(), rng, -2, 2));
    }
    const auto bytes = serialize(m);
    if (serialize(deserialize(bytes)) == bytes) ++round_trips;

    auto bad = bytes;
    Kind expected{};
    switch (i % 4) {
      case 0:
        bad[rng() % 4] ^= static_cast<std::uint8_t>(1 + rng() % 255);
        expected = Kind::bad_magic;
        break;
      case 1:
        bad[4 + rng() % 4] ^= static_cast<std::uint8_t>(1 + rng() % 255);
        expected = Kind::bad_version;
        break;
      case 2:
        bad.resize(rng() % bytes.size());
        expected = Kind::truncated;
        break;
      default: {
        ModelConfig other = c;
        other.base_channels = c.base_channels * 2;
        bad = replace_config(bytes, other);
        expected = Kind::shape_mismatch;
      }
    }
    try {
      deserialize(bad);
      ++wrong;
    } catch (const ArchiveError& e) {
      if (e.kind() == expected) ++corruptions;
      else ++wrong;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {round_trips == 1000 && wrong == 0 && secs < 60.0,
          std::to_string(round_trips) + "/1000 byte-identical, " + std::to_string(corruptions) +
              "/1000 corruptions classified, " + fmt("%.1fs", secs)};
}

Verdict metric_oracle() {
  Rng rng(77);
  double worst_psnr = 0.0, worst_ssim = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t h = 11 + rng() % 20, w = 11 + rng() % 20;
    const Tensor a = random_tensor({1, 1 + 2 * (rng() % 2), h, w}, rng, 0, 1);
    Tensor b = a;
    std::uniform_real_distribution<double> noise(-0.3, 0.3);
    for (double& x : b.data()) x = std::clamp(x + noise(rng), 0.0, 1.0);
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - cfin::testing::naive_psnr(a, b, 0)));
    worst_ssim = std::max(worst_ssim, std::abs(ssim(a, b) - cfin::testing::naive_ssim(a, b, 0)));
  }
  const Tensor x = random_tensor({1, 3, 16, 16}, rng, 0, 0.9);
  Tensor y = x;
  for (double& v : y.data()) v += 1.0 / 255.0;
  const double offset = psnr(x, y);
  const bool anchors = std::isinf(psnr(x, x)) && ssim(x, x) == 1.0 && fmt("%.2f", offset) == "48.13";
  return {worst_psnr < 1e-9 && worst_ssim < 1e-9 && anchors,
          "worst |dPSNR|=" + fmt("%.1e", worst_psnr) + " |dSSIM|=" + fmt("%.1e", worst_ssim) +
              ", offset pair " + fmt("%.4f", offset) + " dB, anchors " + (anchors ? "hold" : "FAIL")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"parameter budget", param_budget},     {"gradient oracle", gradient_oracle},
      {"gumbel-softmax law", gumbel_law},     {"mask discreteness", mask_discreteness},
      {"attention shape", attention_shape},   {"ablation executability", ablations},
      {"toy learning", toy_learning},         {"serialization", serialization},
      {"metric oracle", metric_oracle},
  };
  int failed = 0, index = 0;
  for (const auto& [name, run] : criteria) {
    ++index;
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", index, name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
