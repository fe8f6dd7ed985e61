#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "epopt/environments.h"
#include "epopt/error.h"

using namespace epopt;

namespace {

Vector v2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

const ModelParams kPend({"m", "l", "c"}, {1.0, 1.0, 0.0});

}  // namespace

TEST(Pendulum, UprightIsFixedPoint) {
  PendulumEnv env;
  const auto out = env.step(v2(0, 0), Vector::Zero(1), kPend);
  EXPECT_EQ(out.next_state, v2(0, 0));
  EXPECT_EQ(out.reward, 0.0);
  EXPECT_FALSE(out.terminated);
}

TEST(Pendulum, HangingAtRest) {
  PendulumEnv env;
  const auto out = env.step(v2(std::numbers::pi, 0), Vector::Zero(1), kPend);
  EXPECT_NEAR(out.next_state[1], 0.0, 1e-12);
  EXPECT_NEAR(out.next_state[0], std::numbers::pi, 1e-12);
}

TEST(Pendulum, HandEvaluatedEulerStep) {
  PendulumEnv env;
  const auto out = env.step(v2(std::numbers::pi / 2, 0), Vector::Zero(1), kPend);
  EXPECT_NEAR(out.next_state[1], 0.4905, 1e-12);
  EXPECT_NEAR(out.next_state[0], std::numbers::pi / 2 + 0.024525, 1e-12);
}

TEST(Pendulum, TorqueIsClipped) {
  PendulumEnv env;
  const double max = env.config().max_torque;
  const auto a = env.step(v2(std::numbers::pi, 0), Vector::Constant(1, 100.0), kPend);
  const auto b = env.step(v2(std::numbers::pi, 0), Vector::Constant(1, max), kPend);
  EXPECT_EQ(a.next_state, b.next_state);
}

TEST(Pendulum, EnergyDriftSmallWithoutDampingOrTorque) {
  PendulumEnv env;
  Vector s = v2(std::numbers::pi - 1.0, 0.0);
  const double e0 = env.energy(s, kPend);
  double worst_first = 0.0;
  double worst_second = 0.0;
  for (int t = 0; t < 200; ++t) {
    s = env.step(s, Vector::Zero(1), kPend).next_state;
    const double d = std::abs(env.energy(s, kPend) - e0);
    double& worst = t < 100 ? worst_first : worst_second;
    worst = std::max(worst, d);
  }
  EXPECT_LT(std::abs(env.energy(s, kPend) - e0) / std::abs(e0), 0.05);
  // Symplectic stepper: the energy error oscillates but does not grow.
  EXPECT_LT(worst_second, 1.05 * worst_first);
}

TEST(Pendulum, RewardUsesWrappedAngle) {
  PendulumEnv env;
  const auto a = env.step(v2(0.3, 0), Vector::Zero(1), kPend);
  const auto b = env.step(v2(0.3 + 2 * std::numbers::pi, 0), Vector::Zero(1), kPend);
  EXPECT_NEAR(a.reward, b.reward, 1e-12);
  EXPECT_NEAR(a.reward, -0.09, 1e-12);
}

TEST(Pendulum, NonFiniteInputThrows) {
  PendulumEnv env;
  EXPECT_THROW(env.step(v2(NAN, 0), Vector::Zero(1), kPend), NumericalBlowup);
}

TEST(Pendulum, MissingParameterThrows) {
  PendulumEnv env;
  EXPECT_THROW(env.step(v2(0, 0), Vector::Zero(1), ModelParams({"m"}, {1.0})), UnknownParameter);
  EXPECT_THROW(env.check_params(ModelParams({"m", "l"}, {1.0, 1.0})), UnknownParameter);
}

TEST(WrapAngle, Range) {
  EXPECT_DOUBLE_EQ(wrap_angle(std::numbers::pi), std::numbers::pi);
  EXPECT_DOUBLE_EQ(wrap_angle(-std::numbers::pi), std::numbers::pi);
  EXPECT_NEAR(wrap_angle(3 * std::numbers::pi / 2), -std::numbers::pi / 2, 1e-12);
  for (double x = -20; x < 20; x += 0.37) {
    const double w = wrap_angle(x);
    EXPECT_GT(w, -std::numbers::pi);
    EXPECT_LE(w, std::numbers::pi);
    EXPECT_NEAR(std::remainder(w - x, 2 * std::numbers::pi), 0.0, 1e-9);
  }
}

TEST(Hopper, BallisticFlight) {
  SpringHopperEnv env;
  const ModelParams p({"m", "k", "c"}, {1.0, 50.0, 1.0});
  const auto out = env.step(v2(2.0, 0.0), Vector::Constant(1, 5.0), p);
  EXPECT_NEAR(out.next_state[1], -9.81 * 0.01, 1e-12);
}

TEST(Hopper, StanceEquilibrium) {
  SpringHopperEnv env;
  const ModelParams p({"m", "k", "c"}, {1.2, 50.0, 0.7});
  const double z = 1.0 - 1.2 * 9.81 / 50.0;
  const auto out = env.step(v2(z, 0.0), Vector::Zero(1), p);
  EXPECT_NEAR(out.next_state[0], z, 1e-12);
  EXPECT_NEAR(out.next_state[1], 0.0, 1e-12);
}

TEST(Hopper, CrashTerminatesWithoutBonus) {
  SpringHopperEnv env;
  const ModelParams p({"m", "k", "c"}, {1.0, 50.0, 1.0});
  const auto out = env.step(v2(0.29, -1.0), Vector::Zero(1), p);
  EXPECT_TRUE(out.terminated);
  EXPECT_EQ(out.reward, std::max(out.next_state[1], 0.0));
}

TEST(Hopper, ContinuousAtContactBoundary) {
  SpringHopperEnv env;
  const ModelParams p({"m", "k", "c"}, {1.0, 50.0, 0.0});
  const auto below = env.step(v2(1.0 - 1e-9, 0.3), Vector::Zero(1), p);
  const auto above = env.step(v2(1.0 + 1e-9, 0.3), Vector::Zero(1), p);
  EXPECT_NEAR(below.next_state[1], above.next_state[1], 1e-8);
}

TEST(Hopper, RequiresPositiveParameters) {
  SpringHopperEnv env;
  EXPECT_THROW(env.step(v2(0.9, 0), Vector::Zero(1), ModelParams({"m", "k", "c"}, {1.0, -1.0, 0.0})),
               ConfigError);
}

TEST(Environments, StepIsPure) {
  for (const auto& name : env_names()) {
    auto env = make_env(name);
    const auto p = default_source(name).mean();
    Rng rng = make_stream(4, {});
    const Vector s = env->reset(p, rng);
    const Vector a = Vector::Constant(1, 0.7);
    const auto x = env->step(s, a, p);
    const auto y = env->step(s, a, p);
    EXPECT_EQ(x.next_state, y.next_state);
    EXPECT_EQ(x.reward, y.reward);
  }
  EXPECT_THROW(make_env("cheetah"), ConfigError);
}

TEST(DefaultSource, PendulumBoundsAreTwoSigma) {
  for (const auto& d : default_source("pendulum").dims()) {
    EXPECT_NEAR(d.low, d.mu - 2 * d.sigma, 1e-12) << d.name;
    EXPECT_NEAR(d.high, d.mu + 2 * d.sigma, 1e-12) << d.name;
  }
}

TEST(DefaultSource, PositiveDimensionsStayPositive) {
  for (const auto& name : env_names()) {
    const auto src = default_source(name);
    Rng rng = make_stream(5, {});
    for (int i = 0; i < 2000; ++i) {
      const auto p = sample_params(src, rng);
      for (const char* key : {"m", "l", "k"}) {
        if (p.contains(key)) {
          EXPECT_GT(p.at(key), 0.0);
        }
      }
    }
  }
}
