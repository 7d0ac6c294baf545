#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "gminf/conditions.hpp"
#include "gminf/errors.hpp"
#include "gminf/verify.hpp"

namespace gminf {
namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

GmmTarget pair() { return GmmTarget({{0.5, v2(1, 0), 1.0}, {0.5, v2(-1, 0), 1.0}}); }

TEST(Conditions, NoneIsZero) {
  const ConditionModel m;
  EXPECT_TRUE(m.is_none());
  SeededRng rng(1);
  for (int t = 0; t < 5; ++t) {
    const Vector x = v2(rng.normal(), rng.normal());
    EXPECT_EQ(cond_log_likelihood(m, x), 0.0);
    EXPECT_EQ(cond_grad(m, x), Vector::Zero(2));
  }
}

TEST(Conditions, MaskExactMatchIsZero) {
  Vector c(1);
  c << 3.0;
  const ConditionModel m(MaskCondition{{0}, c, 1.0});
  EXPECT_EQ(cond_log_likelihood(m, v2(3, 7)), 0.0);
}

TEST(Conditions, MaskGradientFormulaAndSparsity) {
  Vector c(1);
  c << 0.5;
  const double tau = 0.05;
  const ConditionModel m(MaskCondition{{1}, c, tau});
  const Vector x = v2(2.0, 0.7);
  const Vector g = cond_grad(m, x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_NEAR(g[1], -(0.7 - 0.5) / (tau * tau), 1e-12);
  EXPECT_NEAR(cond_log_likelihood(m, x), -0.04 / (2 * tau * tau), 1e-12);
}

TEST(Conditions, ComponentSymmetric) {
  const ConditionModel m(ComponentCondition{pair(), 0, 2.0});
  EXPECT_NEAR(cond_log_likelihood(m, v2(0, 3)), 2.0 * std::log(0.5), 1e-15);
}

TEST(Conditions, ComponentMatchesFiniteDifferences) {
  const ConditionModel m(ComponentCondition{GmmTarget::ring8(), 3, 1.0});
  SeededRng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Vector x = v2(2 * rng.normal(), 2 * rng.normal());
    const Vector fd = finite_difference_gradient(
        [&](const Vector& a) { return cond_log_likelihood(m, a); }, x, 1e-5);
    EXPECT_LT(relative_error(cond_grad(m, x), fd), 1e-4);
  }
}

TEST(Conditions, ComponentBetaScalesLinearly) {
  const ConditionModel one(ComponentCondition{pair(), 1, 1.0});
  const ConditionModel three(ComponentCondition{pair(), 1, 3.0});
  const Vector x = v2(0.3, -0.4);
  EXPECT_EQ(cond_grad(three, x), 3.0 * cond_grad(one, x));
}

TEST(Conditions, DiscriminatorMatchesFiniteDifferences) {
  SeededRng rng(3);
  auto net = std::make_shared<const MlpNet>(MlpNet::random({2, 8, 8, 1}, Activation::Tanh, rng));
  const ConditionModel m(DiscriminatorCondition{net});
  for (int t = 0; t < 20; ++t) {
    const Vector x = v2(rng.normal(), rng.normal());
    EXPECT_EQ(cond_log_likelihood(m, x), mlp_forward(*net, x)[0]);
    const Vector fd = finite_difference_gradient(
        [&](const Vector& a) { return mlp_forward(*net, a)[0]; }, x, 1e-5);
    EXPECT_LT(relative_error(cond_grad(m, x), fd), 1e-4);
  }
}

TEST(Conditions, Validation) {
  Vector c(1);
  c << 0.0;
  EXPECT_THROW(ConditionModel(MaskCondition{{}, Vector(0), 0.05}).validate(2), InvalidArgument);
  EXPECT_THROW(ConditionModel(MaskCondition{{5}, c, 0.05}).validate(2), InvalidArgument);
  EXPECT_ANY_THROW(ConditionModel(MaskCondition{{0}, c, 0.0}).validate(2));
  EXPECT_ANY_THROW(ConditionModel(ComponentCondition{pair(), 2, 1.0}).validate(2));
  EXPECT_ANY_THROW(ConditionModel(DiscriminatorCondition{nullptr}).validate(2));
  EXPECT_NO_THROW(ConditionModel(MaskCondition{{1}, c, 0.05}).validate(2));
}

TEST(Conditions, Names) {
  EXPECT_STREQ(ConditionModel().name(), "none");
  Vector c(1);
  c << 0.0;
  EXPECT_STREQ(ConditionModel(MaskCondition{{0}, c, 0.05}).name(), "mask");
}

}  // namespace
}  // namespace gminf
