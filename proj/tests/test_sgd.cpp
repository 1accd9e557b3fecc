#include <gtest/gtest.h>

#include "clr/sgd.hpp"
#include "clr/tensor.hpp"

using namespace clr;

namespace {

TensorPtr param(std::initializer_list<float> vals) {
  auto t = make_tensor<float>({static_cast<int>(vals.size())}, vals, true);
  return t;
}

}  // namespace

TEST(Sgd, PlainStep) {
  auto p = param({1.0f});
  p->grad[0] = 0.5f;
  SgdState s(1.0f, 0.0f);
  sgd_step(s, {p});
  EXPECT_FLOAT_EQ(p->data[0], 0.5f);
}

TEST(Sgd, ZeroGradientLeavesParameterUnchanged) {
  auto p = param({2.5f});
  SgdState s(0.3f, 0.9f);
  sgd_step(s, {p});
  EXPECT_FLOAT_EQ(p->data[0], 2.5f);
}

TEST(Sgd, MomentumAccumulatesAcrossSteps) {
  auto p = param({1.0f});
  SgdState s(0.1f, 0.9f);
  p->grad[0] = 1.0f;
  sgd_step(s, {p});
  EXPECT_NEAR(p->data[0], 0.9f, 1e-7);  // v=1, delta=0.1
  p->grad[0] = 1.0f;
  sgd_step(s, {p});
  EXPECT_NEAR(p->data[0], 0.71f, 1e-7);  // v=1.9, delta=0.19
}

TEST(Sgd, ZeroLrKeepsParamsButAccumulatesVelocity) {
  auto p = param({1.0f});
  SgdState s(0.0f, 0.5f);
  p->grad[0] = 2.0f;
  sgd_step(s, {p});
  EXPECT_FLOAT_EQ(p->data[0], 1.0f);
  EXPECT_FLOAT_EQ(s.velocity[p.get()][0], 2.0f);
}

TEST(Sgd, GradientsAreZeroedAfterStep) {
  auto p = param({1.0f, 2.0f, 3.0f});
  p->grad = {0.1f, 0.2f, 0.3f};
  SgdState s(0.01f);
  sgd_step(s, {p});
  for (float g : p->grad) EXPECT_FLOAT_EQ(g, 0.0f);
}

TEST(Sgd, EachParameterHasItsOwnVelocity) {
  auto a = param({0.0f});
  auto b = param({0.0f});
  SgdState s(1.0f, 0.9f);
  a->grad[0] = 1.0f;
  b->grad[0] = -1.0f;
  sgd_step(s, {a, b});
  a->grad[0] = 0.0f;
  b->grad[0] = 0.0f;
  sgd_step(s, {a, b});
  EXPECT_NEAR(a->data[0], -1.9f, 1e-6);
  EXPECT_NEAR(b->data[0], 1.9f, 1e-6);
}

TEST(Sgd, FrozenParameterIsStateError) {
  auto frozen = make_tensor<float>({2});
  SgdState s(0.1f);
  EXPECT_THROW(sgd_step(s, {frozen}), StateError);
}

TEST(Sgd, NullParameterIsStateError) {
  SgdState s(0.1f);
  EXPECT_THROW(sgd_step(s, {nullptr}), StateError);
}

TEST(Sgd, ReshapedParameterIsStateError) {
  auto p = param({1.0f, 2.0f});
  p->grad = {1.0f, 1.0f};
  SgdState s(0.1f);
  sgd_step(s, {p});
  p->data.resize(3, 0.0f);
  p->grad.assign(3, 1.0f);
  EXPECT_THROW(sgd_step(s, {p}), StateError);
}

TEST(Sgd, HyperparameterRangesAreValidated) {
  EXPECT_THROW(SgdState(-0.1f), RangeError);
  EXPECT_THROW(SgdState(0.1f, -0.1f), RangeError);
  EXPECT_THROW(SgdState(0.1f, 1.0f), RangeError);
  EXPECT_NO_THROW(SgdState(0.0f, 0.0f));
  EXPECT_NO_THROW(SgdState(0.1f, 0.99f));
}
