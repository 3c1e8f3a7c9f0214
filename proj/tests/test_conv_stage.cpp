#include <gtest/gtest.h>

#include <cmath>

#include "cfin/conv_stage.hpp"
#include "test_util.hpp"

using namespace cfin;
using cfin::testing::random_tensor;

namespace {

Tensor logits3(double a, double b, double c, std::size_t pixels = 1) {
  Tensor t({1, 3, 1, pixels});
  for (std::size_t p = 0; p < pixels; ++p) {
    t.at(0, 0, 0, p) = a;
    t.at(0, 1, 0, p) = b;
    t.at(0, 2, 0, p) = c;
  }
  return t;
}

std::array<double, 3> argmax_frequencies(const Tensor& logits, double tau, std::size_t n, Rng& rng) {
  std::array<double, 3> counts{};
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor hard = one_hot_argmax(gumbel_softmax(logits, tau, &rng));
    for (std::size_t m = 0; m < 3; ++m) counts[m] += hard.at(0, m, 0, 0);
  }
  for (double& c : counts) c /= static_cast<double>(n);
  return counts;
}

void zero_conv(const ConvLayer& c) {
  Var k = c.gain ? *c.gain : c.kernel;
  k.assign(Tensor(k.shape()));
  if (c.bias) {
    Var b = *c.bias;
    b.assign(Tensor(b.shape()));
  }
}

}  // namespace

TEST(GumbelSoftmax, EvalIsPlainSoftmax) {
  const Tensor y = gumbel_softmax(logits3(5, 0, 0), 1.0, nullptr);
  EXPECT_NEAR(y[0], 0.9867, 1e-4);
  EXPECT_NEAR(y[1], 0.0067, 1e-4);
  EXPECT_NEAR(y[2], 0.0067, 1e-4);
}

TEST(GumbelSoftmax, RowsSumToOne) {
  Rng rng(1);
  const Tensor y = gumbel_softmax(random_tensor({2, 3, 4, 4}, rng, -3, 3), 0.5, &rng);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 4; ++w)
        EXPECT_NEAR(y.at(b, 0, h, w) + y.at(b, 1, h, w) + y.at(b, 2, h, w), 1.0, 1e-12);
}

TEST(GumbelSoftmax, Errors) {
  EXPECT_THROW(gumbel_softmax(logits3(0, 0, 0), 0.0, nullptr), std::invalid_argument);
  EXPECT_THROW(gumbel_softmax(Tensor({1, 1, 1, 1}), 1.0, nullptr), ShapeError);
}

TEST(GumbelSoftmax, EqualLogitsSampleUniformly) {
  Rng rng(2);
  const auto f = argmax_frequencies(logits3(0, 0, 0), 1.0, 100000, rng);
  for (double v : f) EXPECT_NEAR(v, 1.0 / 3.0, 0.01);
}

TEST(GumbelSoftmax, ArgmaxLawMatchesSoftmax) {
  Rng rng(3);
  const std::size_t n = 100000;
  const Tensor p = softmax(logits3(1, 0, -1), 1);
  const auto f = argmax_frequencies(logits3(1, 0, -1), 1.0, n, rng);
  for (std::size_t m = 0; m < 3; ++m) {
    const double sigma = std::sqrt(p[m] * (1 - p[m]) / n);
    EXPECT_NEAR(f[m], p[m], 3 * sigma);
  }
}

TEST(GumbelSoftmax, DominantLogitAlmostAlwaysWins) {
  Rng rng(4);
  const auto f = argmax_frequencies(logits3(30, 0, 0), 1.0, 20000, rng);
  EXPECT_GE(f[0], 0.999);
}

TEST(SelectMask, EveryPixelOneHot) {
  Rng rng(5);
  for (MaskMode mode : {MaskMode::gumbel, MaskMode::softmax, MaskMode::maxpool}) {
    std::vector<Tensor> log;
    ForwardOptions opts;
    opts.mode = Mode::train;
    opts.rng = &rng;
    opts.mask_log = &log;
    const Var m = select_mask(constant(random_tensor({2, 3, 5, 5}, rng)), mode, 1.0, opts);
    ASSERT_EQ(log.size(), 1u);
    const Tensor& hard = log[0];
    EXPECT_EQ(hard.shape(), (Shape{2, 3, 5, 5}));
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 5; ++w) {
          double total = 0.0;
          for (std::size_t c = 0; c < 3; ++c) {
            const double v = hard.at(b, c, h, w);
            EXPECT_TRUE(v == 0.0 || v == 1.0);
            total += v;
          }
          EXPECT_EQ(total, 1.0);
          EXPECT_EQ(m.value().at(b, 0, h, w), hard.at(b, 0, h, w));
        }
  }
}

TEST(SelectMask, TrainModeNeedsRng) {
  ForwardOptions opts;
  opts.mode = Mode::train;
  EXPECT_THROW(select_mask(constant(Tensor({1, 3, 1, 1})), MaskMode::gumbel, 1.0, opts), std::invalid_argument);
}

TEST(SelectMask, StraightThroughGradientIsSoftmaxDerivative) {
  Rng rng(6);
  const Tensor r = random_tensor({1, 3, 2, 2}, rng);
  const Tensor up = random_tensor({1, 1, 2, 2}, rng);
  const Var logits = parameter(r);
  ForwardOptions opts;
  const Var m = select_mask(logits, MaskMode::softmax, 0.7, opts);
  backward(sum_all(mul(m, constant(up))));
  // soft channel 0 differentiated by central differences
  for (std::size_t i = 0; i < r.size(); ++i) {
    auto s0 = [&](double d) {
      Tensor t = r;
      t[i] += d;
      return gumbel_softmax(t, 0.7, nullptr);
    };
    const std::size_t h = (i / 2) % 2, w = i % 2;
    const double numeric = (s0(1e-6).at(0, 0, h, w) - s0(-1e-6).at(0, 0, h, w)) / 2e-6 * up.at(0, 0, h, w);
    EXPECT_NEAR(logits.grad()[i], numeric, 1e-8);
  }
}

TEST(SelectMask, TapeReplaysMasks) {
  Rng rng(7);
  MaskTape tape;
  ForwardOptions opts;
  opts.mode = Mode::train;
  opts.rng = &rng;
  opts.mask_tape = &tape;
  const Tensor r = random_tensor({1, 3, 4, 4}, rng);
  const Tensor first = select_mask(constant(r), MaskMode::gumbel, 1.0, opts).value();
  tape.use = MaskTape::Use::replay;
  tape.cursor = 0;
  const Tensor again = select_mask(constant(random_tensor({1, 3, 4, 4}, rng)), MaskMode::gumbel, 1.0, opts).value();
  EXPECT_EQ(first, again);
  EXPECT_THROW(select_mask(constant(r), MaskMode::gumbel, 1.0, opts), std::logic_error);
}

class RifuTest : public ::testing::Test {
 protected:
  Rng rng{8};
  ParamStore store;
  RifuOptions options;
  void SetUp() override { options.ca_reduction = 2; }
};

TEST_F(RifuTest, PreservesShape) {
  const RifuParams p = make_rifu(store, "r", 4, options, rng);
  ForwardOptions opts;
  const Var x = constant(random_tensor({2, 4, 6, 5}, rng));
  EXPECT_EQ(rifu_forward(x, p, opts).shape(), x.shape());
  EXPECT_THROW(rifu_forward(constant(Tensor({1, 3, 6, 6})), p, opts), ShapeError);
}

TEST_F(RifuTest, ZeroWeightsGiveIdentity) {
  const RifuParams p = make_rifu(store, "r", 4, options, rng);
  zero_conv(p.conv_in);
  zero_conv(p.conv_out);
  const Tensor x = random_tensor({1, 4, 5, 5}, rng);
  ForwardOptions opts;
  EXPECT_EQ(rifu_forward(constant(x), p, opts).value(), x);
}

TEST_F(RifuTest, MaskOffIsPlainConvPath) {
  options.mask_enabled = false;
  const RifuParams p = make_rifu(store, "r", 4, options, rng);
  EXPECT_FALSE(p.proj_mask.has_value());
  for (const auto& item : store.items()) EXPECT_EQ(item.first.find("proj_mask"), std::string::npos);
  const Var x = constant(random_tensor({1, 4, 5, 5}, rng));
  const Var manual = add(p.ca(p.conv_out(leaky_relu(p.conv_in(x), options.lrelu_slope))), x);
  ForwardOptions opts;
  EXPECT_EQ(rifu_forward(x, p, opts).value(), manual.value());
}

TEST_F(RifuTest, EvalModeIsDeterministic) {
  const RifuParams p = make_rifu(store, "r", 4, options, rng);
  const Var x = constant(random_tensor({1, 4, 6, 6}, rng));
  ForwardOptions opts;
  EXPECT_EQ(rifu_forward(x, p, opts).value(), rifu_forward(x, p, opts).value());
}

TEST_F(RifuTest, GradientReachesMaskProjection) {
  const RifuParams p = make_rifu(store, "r", 4, options, rng);
  ForwardOptions opts;
  opts.mode = Mode::train;
  opts.rng = &rng;
  backward(sum_all(rifu_forward(constant(random_tensor({1, 4, 6, 6}, rng)), p, opts)));
  for (const auto& [name, var] : store.items()) {
    ASSERT_FALSE(var.grad().empty()) << name;
    double m = 0.0;
    for (double g : var.grad().data()) m = std::max(m, std::abs(g));
    EXPECT_GT(m, 0.0) << name;
  }
}

TEST(Ciam, PreservesShapeAcrossSizes) {
  Rng rng(9);
  ParamStore store;
  RifuOptions options;
  options.ca_reduction = 2;
  const CiamParams p = make_ciam(store, "c", 4, options, true, rng);
  ForwardOptions opts;
  for (std::size_t s : {8u, 16u, 48u}) {
    const Var x = constant(random_tensor({1, 4, s, s}, rng));
    EXPECT_EQ(ciam_forward(x, p, opts).shape(), x.shape());
  }
  const Var odd = constant(random_tensor({1, 4, 7, 5}, rng));
  EXPECT_EQ(ciam_forward(odd, p, opts).shape(), odd.shape());
  EXPECT_THROW(ciam_forward(constant(Tensor({1, 4, 1, 4})), p, opts), ShapeError);
}

TEST(Ciam, BranchFlagBothRun) {
  Rng rng(10);
  RifuOptions options;
  options.ca_reduction = 2;
  ParamStore with, without;
  const CiamParams a = make_ciam(with, "c", 4, options, true, rng);
  const CiamParams b = make_ciam(without, "c", 4, options, false, rng);
  EXPECT_GT(with.scalar_count(), without.scalar_count());
  const Var x = constant(random_tensor({1, 4, 8, 8}, rng));
  ForwardOptions opts;
  EXPECT_EQ(ciam_forward(x, a, opts).shape(), ciam_forward(x, b, opts).shape());
}

TEST(Ciam, MatchesComposition) {
  Rng rng(11);
  ParamStore store;
  RifuOptions options;
  options.ca_reduction = 2;
  const CiamParams p = make_ciam(store, "c", 4, options, true, rng);
  const Var x = constant(random_tensor({1, 4, 6, 6}, rng));
  ForwardOptions opts;
  const Var x1 = rifu_forward(x, p.rifu1, opts);
  const Var x2 = mul(p.down(p.up(x)), sigmoid(rifu_forward(x1, p.rifu2, opts)));
  const Var expected = add(rifu_forward(add(x2, x1), p.rifu3, opts), x);
  EXPECT_EQ(ciam_forward(x, p, opts).value(), expected.value());
}
