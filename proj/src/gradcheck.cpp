#include "cfin/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>

#include "cfin/cfgt.hpp"
#include "cfin/conv_stage.hpp"
#include "cfin/model.hpp"

namespace cfin {
namespace {

constexpr double kFloor = 1e-4;
constexpr double kKinkRel = 1e-2;
constexpr double kKinkAbs = 1e-6;

Tensor uniform(const Shape& s, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// A module under test: learnable state plus an input treated as a parameter.
struct Case {
  ParamStore store;
  std::shared_ptr<Model> model;  // set for the whole-network suite
  std::function<Var(const ForwardOptions&)> forward;
  bool has_mask = false;

  std::vector<std::pair<std::string, Var>> tensors() const {
    auto all = store.items();
    if (model) all.insert(all.end(), model->params().items().begin(), model->params().items().end());
    return all;
  }
  void zero_grad() {
    store.zero_grad();
    if (model) model->params().zero_grad();
  }
};

const char* to_string(MaskGrad m) {
  switch (m) {
    case MaskGrad::straight_through: return "straight_through";
    case MaskGrad::frozen: return "frozen";
    case MaskGrad::relaxed: return "relaxed";
  }
  return "?";
}

void check_case(Case& c, std::uint64_t seed, MaskGrad mask_grad, const GradcheckOptions& o,
                GradcheckResult& result) {
  MaskTape tape;
  auto run = [&] {
    Rng noise(seed * 7919 + 1);
    ForwardOptions fo;
    fo.mode = Mode::train;
    fo.rng = &noise;
    fo.mask_grad = mask_grad;
    fo.mask_tape = c.has_mask ? &tape : nullptr;
    tape.cursor = 0;
    return c.forward(fo);
  };

  c.zero_grad();
  tape.use = MaskTape::Use::record;
  const Var out = run();
  Rng pr(seed + 99);
  const Var projection = constant(uniform(out.shape(), -1.0, 1.0, pr));
  // Subtracting the unperturbed output leaves the gradient unchanged and keeps
  // the perturbed sums small, which cuts rounding noise in the differences.
  const Var reference = constant(out.value());
  auto loss_of = [&](const Var& o) { return sum_all(mul(sub(o, reference), projection)); };
  backward(loss_of(out));
  tape.use = MaskTape::Use::replay;
  const double base = 0.0;  // loss at the unperturbed point, exactly
  auto evaluate = [&] {
    NoGradGuard guard;
    return loss_of(run()).value()[0];
  };

  Rng pick(seed + 1234);
  for (const auto& [name, var] : c.tensors()) {
    const Tensor analytic = var.grad().empty() ? Tensor(var.shape()) : var.grad();
    const std::size_t n = var.value().size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), pick);
    Var target = var;
    std::size_t done = 0;
    for (std::size_t i : idx) {
      if (done == o.samples_per_tensor) break;
      const Tensor original = var.value();
      Tensor bumped = original;
      bumped[i] = original[i] + o.step;
      target.assign(bumped);
      const double up = evaluate();
      bumped[i] = original[i] - o.step;
      target.assign(bumped);
      const double down = evaluate();
      target.assign(original);
      // one-sided slopes disagree across a ReLU / max-pool switch
      const double fwd = (up - base) / o.step, bwd = (base - down) / o.step;
      if (std::abs(fwd - bwd) > std::max(kKinkRel * std::max(std::abs(fwd), std::abs(bwd)), kKinkAbs)) {
        ++result.kinks;
        continue;
      }
      ++done;
      const double numeric = (up - down) / (2.0 * o.step);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kFloor});
      ++result.checked;
      if (rel >= result.worst) {
        result.worst = rel;
        std::ostringstream where;
        where << "seed=" << seed << " mask=" << to_string(mask_grad) << ' ' << name << '[' << i
              << "] analytic=" << a << " numeric=" << numeric;
        result.worst_where = where.str();
      }
    }
  }
}

std::unique_ptr<Case> make_case(const std::string& suite, std::uint64_t seed) {
  auto c = std::make_unique<Case>();
  Rng rng(seed);
  ParamStore& s = c->store;
  RifuOptions rifu;
  rifu.ca_reduction = 2;
  if (suite == "rifu") {
    auto p = make_rifu(s, "rifu", 4, rifu, rng);
    Var x = s.add("input", uniform({2, 4, 6, 6}, -1.0, 1.0, rng));
    c->forward = [p, x](const ForwardOptions& fo) { return rifu_forward(x, p, fo); };
    c->has_mask = true;
  } else if (suite == "ciam") {
    auto p = make_ciam(s, "ciam", 4, rifu, true, rng);
    Var x = s.add("input", uniform({2, 4, 6, 6}, -1.0, 1.0, rng));
    c->forward = [p, x](const ForwardOptions& fo) { return ciam_forward(x, p, fo); };
    c->has_mask = true;
  } else if (suite == "cgm") {
    auto p = make_cgm(s, "cgm", 4, 6, 3, 2, rng);
    Var x = s.add("input", uniform({2, 4, 7, 6}, -1.0, 1.0, rng));
    c->forward = [p, x](const ForwardOptions&) { return cgm_forward(x, p); };
  } else if (suite == "cga") {
    auto p = make_cga(s, "cga", 8, 2, 3, 2, rng);
    Var x = s.add("input", uniform({2, 8, 6, 6}, -1.0, 1.0, rng));
    Var ki = s.add("k_in", uniform({2, 2, 4, 36}, -0.5, 0.5, rng));
    Var vi = s.add("v_in", uniform({2, 2, 4, 36}, -0.5, 0.5, rng));
    c->forward = [p, x, ki, vi](const ForwardOptions&) {
      return cga_forward(x, p, KeyValue{ki, vi}).output;
    };
  } else if (suite == "cfgt") {
    auto p = make_cfgt(s, "cfgt", 4, 2, 3, 5, true, 2, rng);
    Var x = s.add("input", uniform({2, 4, 6, 6}, -1.0, 1.0, rng));
    c->forward = [p, x](const ForwardOptions&) { return cfgt_forward(x, p, CfgtFlags{}); };
  } else if (suite == "model") {
    auto model = std::make_shared<Model>(Model::build(ModelConfig::toy(2), seed));
    c->model = model;
    Var x = s.add("input", uniform({1, 3, 8, 8}, 0.0, 1.0, rng));
    c->forward = [model, x](const ForwardOptions& fo) { return model->forward(x, fo); };
    c->has_mask = true;
  } else {
    throw std::invalid_argument("unknown gradcheck suite: " + suite);
  }
  return c;
}

}  // namespace

const std::vector<std::string>& gradcheck_suites() {
  static const std::vector<std::string> suites{"rifu", "ciam", "cgm", "cga", "cfgt", "model"};
  return suites;
}

GradcheckResult run_gradcheck(const std::string& suite, const GradcheckOptions& opts) {
  GradcheckResult result;
  result.suite = suite;
  for (std::uint64_t seed : opts.seeds) {
    auto c = make_case(suite, seed);
    check_case(*c, seed, MaskGrad::frozen, opts, result);
    if (c->has_mask) {
      auto relaxed = make_case(suite, seed);
      check_case(*relaxed, seed, MaskGrad::relaxed, opts, result);
    }
  }
  result.passed = result.checked > 0 && result.worst < opts.tolerance;
  return result;
}

}  // namespace cfin
