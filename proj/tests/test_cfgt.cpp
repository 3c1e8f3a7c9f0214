#include <gtest/gtest.h>

#include "cfin/cfgt.hpp"
#include "test_util.hpp"

using namespace cfin;
using cfin::testing::random_tensor;

namespace {

void set(Var v, Tensor t) { v.assign(std::move(t)); }

struct Fixture {
  Rng rng{1};
  ParamStore store;
  CfgtParams p = make_cfgt(store, "t", 4, 2, 3, 5, true, 2, rng);
};

}  // namespace

TEST(Igp, ZeroPointKernelIsIdentity) {
  Fixture f;
  set(f.p.igp.point.base_kernel, Tensor(f.p.igp.point.base_kernel.shape()));
  const Tensor x = random_tensor({2, 4, 6, 6}, f.rng);
  EXPECT_EQ(igp_forward(constant(x), f.p.igp).value(), x);
}

TEST(Igp, MatchesComposition) {
  Fixture f;
  const Var x = constant(random_tensor({1, 4, 5, 7}, f.rng));
  const Var expected = add(cgm_forward(gelu(cgm_forward(x, f.p.igp.wide)), f.p.igp.point), x);
  EXPECT_EQ(igp_forward(x, f.p.igp).value(), expected.value());
  EXPECT_THROW(igp_forward(constant(Tensor({1, 4, 2, 6})), f.p.igp), ShapeError);
}

TEST(Cfgt, ShapeAndTrace) {
  Fixture f;
  const Var t = constant(random_tensor({2, 4, 6, 6}, f.rng));
  CfgtTrace trace;
  const Var out = cfgt_forward(t, f.p, {}, &trace);
  EXPECT_EQ(out.shape(), t.shape());

  const CgaResult first = cga_forward(t, f.p.cga1);
  const Var med1 = add(apply(f.p.norm1, first.output), t);
  const Var med2 = add(apply(f.p.norm2, cga_forward(t, f.p.cga2, first.used).output), med1);
  EXPECT_EQ(trace.med1.value(), med1.value());
  EXPECT_EQ(trace.med2.value(), med2.value());
  EXPECT_EQ(trace.first.key.value(), first.used.key.value());
  EXPECT_EQ(out.value(), add(apply(f.p.norm3, igp_forward(med2, f.p.igp)), med2).value());
}

TEST(Cfgt, KvPassFlag) {
  Fixture f;
  const Var t = constant(random_tensor({1, 4, 6, 6}, f.rng));
  CfgtTrace trace;
  const Var without = cfgt_forward(t, f.p, {false, false}, &trace);
  const Var med1 = add(apply(f.p.norm1, cga_forward(t, f.p.cga1).output), t);
  const Var med2 = add(apply(f.p.norm2, cga_forward(t, f.p.cga2).output), med1);
  EXPECT_EQ(trace.med2.value(), med2.value());
  EXPECT_NE(without.value(), cfgt_forward(t, f.p, {true, false}).value());
}

TEST(Cfgt, SecondQuerySourceFlag) {
  Fixture f;
  const Var t = constant(random_tensor({1, 4, 6, 6}, f.rng));
  CfgtTrace trace;
  cfgt_forward(t, f.p, {true, true}, &trace);
  const CgaResult first = cga_forward(t, f.p.cga1);
  const Var med1 = add(apply(f.p.norm1, first.output), t);
  const Var med2 = add(apply(f.p.norm2, cga_forward(med1, f.p.cga2, first.used).output), med1);
  EXPECT_EQ(trace.med2.value(), med2.value());
}

TEST(Cfgt, ZeroNormGainsGiveIdentity) {
  Fixture f;
  for (const LayerNormParams* n : {&f.p.norm1, &f.p.norm2, &f.p.norm3}) set(n->gain, Tensor(n->gain.shape()));
  const Tensor x = random_tensor({2, 4, 6, 6}, f.rng);
  EXPECT_EQ(cfgt_forward(constant(x), f.p, {}).value(), x);
}

TEST(Cfgt, ReceptiveFieldValidation) {
  Rng rng(2);
  ParamStore store;
  EXPECT_THROW(make_cfgt(store, "a", 4, 2, 3, 3, true, 2, rng), std::invalid_argument);
  EXPECT_THROW(make_cfgt(store, "b", 4, 2, 3, 4, true, 2, rng), std::invalid_argument);
  const CfgtParams same = make_cfgt(store, "c", 4, 2, 3, 5, false, 2, rng);
  EXPECT_EQ(same.cga1.q.k, 3u);
  EXPECT_EQ(same.cga2.q.k, 3u);
  const CfgtParams cross = make_cfgt(store, "d", 4, 2, 3, 5, true, 2, rng);
  EXPECT_EQ(cross.cga2.q.k, 5u);
}

TEST(Cfgt, LayerNormNormalizesChannels) {
  Fixture f;
  const Tensor y = apply(f.p.norm1, constant(random_tensor({2, 4, 3, 3}, f.rng, -5, 5))).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t w = 0; w < 3; ++w) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t c = 0; c < 4; ++c) mean += y.at(b, c, h, w) / 4;
        for (std::size_t c = 0; c < 4; ++c) sq += (y.at(b, c, h, w) - mean) * (y.at(b, c, h, w) - mean) / 4;
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(sq, 1.0, 1e-5);
      }
}

TEST(Cfgt, ZeroCgmWeightsLeaveNormalizedResidual) {
  Fixture f;
  for (const CgmParams* c : {&f.p.cga1.v, &f.p.cga2.v, &f.p.igp.point}) set(c->base_kernel, Tensor(c->base_kernel.shape()));
  const Var x = constant(random_tensor({1, 4, 6, 6}, f.rng));
  CfgtTrace trace;
  const Tensor out = cfgt_forward(x, f.p, {}, &trace).value();
  EXPECT_EQ(trace.med1.value(), x.value());
  EXPECT_EQ(trace.med2.value(), x.value());
  // the perceptron's own residual survives, so the block is not the identity
  EXPECT_EQ(out, add(apply(f.p.norm3, x), x).value());
}
