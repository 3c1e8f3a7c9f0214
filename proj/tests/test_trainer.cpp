#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfin/archive.hpp"
#include "cfin/trainer.hpp"
#include "test_util.hpp"

using namespace cfin;
using cfin::testing::fd_worst;
using cfin::testing::random_tensor;

namespace {

PatchSampler toy_sampler(std::uint64_t seed = 1, std::size_t images = 4) {
  Rng rng(seed);
  std::vector<Tensor> hr;
  for (std::size_t i = 0; i < images; ++i) hr.push_back(synthetic_texture(16, 16, rng));
  return PatchSampler(std::move(hr), 8, 2, seed);
}

TrainConfig short_config(std::size_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch = 2;
  return cfg;
}

}  // namespace

TEST(L1Loss, Examples) {
  Rng rng(1);
  const Tensor t = random_tensor({2, 3, 4, 4}, rng);
  EXPECT_EQ(l1_loss(constant(t), constant(t)).value()[0], 0.0);
  Tensor shifted = t;
  for (double& v : shifted.data()) v += 0.5;
  EXPECT_NEAR(l1_loss(constant(shifted), constant(t)).value()[0], 0.5, 1e-12);
  EXPECT_THROW(l1_loss(constant(t), constant(Tensor({2, 3, 4, 5}))), ShapeError);
}

TEST(L1Loss, GradientIsSignOverN) {
  Rng rng(2);
  const Tensor p = random_tensor({1, 2, 3, 3}, rng), t = random_tensor({1, 2, 3, 3}, rng);
  const Var pred = parameter(p);
  backward(l1_loss(pred, constant(t)));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(pred.grad()[i], (p[i] > t[i] ? 1.0 : -1.0) / 18.0);
  EXPECT_LT(fd_worst([&](const std::vector<Var>& v) { return l1_loss(v[0], constant(t)); }, {p}), 1e-6);

  const Var same = parameter(t);
  backward(l1_loss(same, constant(t)));
  for (double g : same.grad().data()) EXPECT_EQ(g, 0.0);
}

TEST(CosineLr, EndpointsAndMidpoint) {
  TrainConfig cfg;
  cfg.steps = 500;
  EXPECT_DOUBLE_EQ(cosine_lr(0, cfg), 5e-4);
  EXPECT_DOUBLE_EQ(cosine_lr(500, cfg), 6.25e-6);
  EXPECT_NEAR(cosine_lr(250, cfg), (5e-4 + 6.25e-6) / 2, 1e-15);
  for (std::size_t s = 1; s <= 500; ++s) EXPECT_LT(cosine_lr(s, cfg), cosine_lr(s - 1, cfg));
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lr_final = cfg.lr_init;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Adam, MatchesScalarReferenceOnQuadratic) {
  ParamStore store;
  const Var x = store.add("x", Tensor({1, 1, 1, 1}, -2.0));
  Adam adam(store, 0.9, 0.999, 1e-8);
  double ref = -2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    store.zero_grad();
    const Var d = sub(x, constant(Tensor({1, 1, 1, 1}, 3.0)));
    backward(sum_all(mul(d, d)));
    adam.step(0.05);
    const double g = 2.0 * (ref - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    ref -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    ASSERT_NEAR(x.value()[0], ref, 1e-12) << "step " << t;
  }
  EXPECT_EQ(adam.steps_taken(), 100u);
}

TEST(Adam, ZeroLearningRateKeepsWeights) {
  Model model = Model::build(ModelConfig::toy(2), 0);
  const auto before = serialize(model);
  PatchSampler sampler = toy_sampler();
  const PatchPair batch = sampler.sample_batch(2);
  Rng rng(0);
  ForwardOptions opts;
  opts.mode = Mode::train;
  opts.rng = &rng;
  backward(l1_loss(model.forward(constant(batch.lr), opts), constant(batch.hr)));
  Adam adam(model.params(), 0.9, 0.999, 1e-8);
  adam.step(0.0);
  EXPECT_EQ(serialize(model), before);
}

TEST(Train, EveryTensorMovesAfterOneStep) {
  Model model = Model::build(ModelConfig::toy(2), 0);
  std::vector<Tensor> before;
  for (const auto& item : model.params().items()) before.push_back(item.second.value());
  PatchSampler sampler = toy_sampler();
  train(model, sampler, short_config(1));
  const auto& items = model.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_GT(max_abs_diff(items[i].second.value(), before[i]), 0.0) << items[i].first;
  }
}

TEST(Train, DeterministicForSeed) {
  auto run = [](std::uint64_t seed) {
    Model model = Model::build(ModelConfig::toy(2), 0);
    PatchSampler sampler = toy_sampler();
    TrainConfig cfg = short_config(3);
    cfg.seed = seed;
    std::vector<double> losses;
    for (const auto& r : train(model, sampler, cfg)) losses.push_back(r.loss);
    return std::make_pair(losses, serialize(model));
  };
  EXPECT_EQ(run(4), run(4));
  EXPECT_NE(run(4).first, run(5).first);
}

TEST(Train, NonFiniteAbortsWithStep) {
  Model model = Model::build(ModelConfig::toy(2), 0);
  PatchSampler sampler = toy_sampler();
  Var target = model.params().items().front().second;
  auto poison = [&](const TrainRecord& r) {
    if (r.step == 1) {
      Tensor t = target.value();
      t[0] = std::nan("");
      target.assign(t);
    }
  };
  try {
    train(model, sampler, short_config(5), poison);
    FAIL() << "training continued through a NaN";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.step(), 2u);
    EXPECT_EQ(std::string(e.what()).rfind("step 2:", 0), 0u) << e.what();
  }
}

TEST(Train, WritesCsvAndCheckpoint) {
  const auto dir = std::filesystem::temp_directory_path() / "cfin_train_test";
  std::filesystem::create_directories(dir);
  TrainConfig cfg = short_config(4);
  cfg.loss_csv = (dir / "loss.csv").string();
  cfg.checkpoint_path = (dir / "ckpt.cfin").string();
  cfg.checkpoint_every = 2;
  Model model = Model::build(ModelConfig::toy(2), 0);
  PatchSampler sampler = toy_sampler();
  const auto history = train(model, sampler, cfg);

  std::ifstream csv(cfg.loss_csv);
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "step,lr,loss");
  for (const TrainRecord& r : history) {
    ASSERT_TRUE(std::getline(csv, line));
    std::stringstream ss(line);
    std::string step, lr, loss;
    std::getline(ss, step, ',');
    std::getline(ss, lr, ',');
    std::getline(ss, loss, ',');
    EXPECT_EQ(std::stoul(step), r.step);
    EXPECT_EQ(std::stod(lr), r.lr);
    EXPECT_EQ(std::stod(loss), r.loss);
  }
  EXPECT_FALSE(std::getline(csv, line));
  EXPECT_EQ(serialize(load(cfg.checkpoint_path)), serialize(model));
  std::filesystem::remove_all(dir);
}

TEST(Train, LossDecreasesOnShortRun) {
  Model model = Model::build(ModelConfig::toy(2), 0);
  PatchSampler sampler = toy_sampler(3, 8);
  TrainConfig cfg = short_config(60);
  cfg.batch = 4;
  std::vector<double> losses;
  for (const auto& r : train(model, sampler, cfg)) losses.push_back(r.loss);
  const auto s = smooth(losses, 10);
  EXPECT_LT(s.back(), 0.5 * s[9]);
}

TEST(Smooth, TrailingMean) {
  const auto s = smooth({1, 2, 3, 4, 5}, 2);
  EXPECT_EQ(s, (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
}
