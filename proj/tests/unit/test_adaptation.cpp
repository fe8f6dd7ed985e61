#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "epopt/adaptation.h"
#include "epopt/environments.h"
#include "epopt/error.h"
#include "test_support.h"

using namespace epopt;
using epopt::testing::LinearEnv;

namespace {

std::vector<ModelParams> draw(Sampling s, const SourceDistribution& prior, int m, std::uint64_t seed) {
  Rng rng = make_stream(seed, {});
  std::vector<ModelParams> out;
  for (int i = 0; i < m; ++i) out.push_back(draw_sample(s, prior, rng));
  return out;
}

std::pair<double, double> weighted_moments(const std::vector<WeightedSample>& w, const char* name) {
  double mean = 0, var = 0;
  for (const auto& s : w) mean += s.weight * s.params.at(name);
  for (const auto& s : w) var += s.weight * std::pow(s.params.at(name) - mean, 2);
  return {mean, var};
}

}  // namespace

TEST(Likelihood, ZeroResidualsClosedForm) {
  LinearEnv env;
  std::mt19937_64 rng(1);
  const auto tau = epopt::testing::linear_trajectory({1.0, -0.5, 2.0, 0.3}, 0.8, 0.0, rng);
  const double s = 0.2;
  const double expected = -4.0 * 0.5 * std::log(2 * std::numbers::pi * s * s);
  EXPECT_NEAR(trajectory_log_likelihood(tau, ModelParams({"p"}, {0.8}), env, Vector::Constant(1, s)),
              expected, 1e-12);
}

TEST(Likelihood, SigmaMleIsMeanSquaredResidual) {
  LinearEnv env;
  std::mt19937_64 rng(2);
  const auto tau = epopt::testing::linear_trajectory({1, 2, -1, 0.5, 1.5, -2}, 0.7, 0.3, rng);
  const ModelParams p({"p"}, {0.7});
  double ms = 0;
  for (std::size_t t = 0; t < tau.length(); ++t) {
    ms += std::pow(tau.next_states[t][0] - 0.7 * tau.states[t][0], 2);
  }
  const double best = std::sqrt(ms / tau.length());
  auto ll = [&](double s) { return trajectory_log_likelihood(tau, p, env, Vector::Constant(1, s)); };
  EXPECT_GT(ll(best), ll(best * 1.01));
  EXPECT_GT(ll(best), ll(best * 0.99));
  EXPECT_GT(ll(best), ll(best * 0.5));
}

TEST(Likelihood, TrueParameterScoresHigher) {
  LinearEnv env;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto tau = epopt::testing::linear_trajectory({1.0, 0.0, -2.0}, 1.3, 0.0, rng);
    const Vector s = Vector::Constant(1, 0.1);
    EXPECT_GT(trajectory_log_likelihood(tau, ModelParams({"p"}, {1.3}), env, s),
              trajectory_log_likelihood(tau, ModelParams({"p"}, {1.3 + 0.05 * (seed + 1)}), env, s));
  }
}

TEST(Likelihood, Errors) {
  LinearEnv env;
  std::mt19937_64 rng(3);
  const auto tau = epopt::testing::linear_trajectory({1.0}, 1.0, 0.0, rng);
  EXPECT_THROW(trajectory_log_likelihood(tau, ModelParams({"p"}, {1.0}), env, Vector::Ones(2)),
               DimensionMismatch);
  EXPECT_THROW(trajectory_log_likelihood(tau, ModelParams({"p"}, {1.0}), env, Vector::Zero(1)),
               ConfigError);
}

TEST(Weights, NormalizedAndShiftInvariant) {
  std::vector<WeightedSample> a;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 30);
  for (int i = 0; i < 200; ++i) a.push_back({ModelParams({"p"}, {double(i)}), n(rng) - 800.0, 0});
  auto b = a;
  for (auto& s : b) s.log_weight += 12345.678;
  normalize_weights(a);
  normalize_weights(b);
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::isfinite(a[i].weight));
    EXPECT_GE(a[i].weight, 0.0);
    EXPECT_NEAR(a[i].weight, b[i].weight, 1e-12);
    sum += a[i].weight;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Weights, AllZeroIsDegenerate) {
  std::vector<WeightedSample> a(3, {ModelParams({"p"}, {1.0}), -INFINITY, 0});
  EXPECT_THROW(normalize_weights(a), DegeneratePosterior);
  LinearEnv env;
  std::mt19937_64 rng(5);
  const auto tau = epopt::testing::linear_trajectory({1.0}, 1.0, 0.0, rng);
  const SourceDistribution prior({{"p", 1.0, 0.0, 0.0, 2.0}});
  // Samples off the frozen value have zero prior density.
  const std::vector<ModelParams> samples = {ModelParams({"p"}, {0.5}), ModelParams({"p"}, {1.5})};
  try {
    importance_weights(samples, tau, prior, Sampling::prior, env, Vector::Ones(1));
    FAIL();
  } catch (const DegeneratePosterior& e) {
    EXPECT_NE(std::string(e.what()).find("sampling distribution"), std::string::npos);
  }
}

TEST(Weights, PriorSamplingWeightsAreLikelihoodRatios) {
  LinearEnv env;
  std::mt19937_64 rng(6);
  const auto tau = epopt::testing::linear_trajectory({1.0, 0.5}, 1.1, 0.05, rng);
  const SourceDistribution prior({{"p", 1.0, 0.3, 0.0, 2.0}});
  const auto samples = draw(Sampling::prior, prior, 50, 6);
  const Vector s = Vector::Constant(1, 0.1);
  const auto w = importance_weights(samples, tau, prior, Sampling::prior, env, s);
  const double l0 = trajectory_log_likelihood(tau, samples[0], env, s);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double li = trajectory_log_likelihood(tau, samples[i], env, s);
    EXPECT_NEAR(w[i].log_weight - w[0].log_weight, li - l0, 1e-9);
  }
}

TEST(Weights, ConstantLikelihoodGivesUniformWeights) {
  LinearEnv env;
  std::mt19937_64 rng(7);
  // s = 0 everywhere: every p predicts the same next state.
  const auto tau = epopt::testing::linear_trajectory({0.0, 0.0, 0.0}, 1.0, 0.0, rng);
  const SourceDistribution prior({{"p", 1.0, 0.3, 0.0, 2.0}});
  const auto samples = draw(Sampling::prior, prior, 64, 7);
  const auto w = importance_weights(samples, tau, prior, Sampling::prior, env, Vector::Ones(1));
  for (const auto& s : w) EXPECT_NEAR(s.weight, 1.0 / 64, 1e-12);
  EXPECT_NEAR(effective_sample_size(w), 64.0, 1e-9);
}

TEST(Weights, ConjugatePosteriorOracle) {
  // Prior N(1.5, 0.4^2) truncated at 4 sd (negligible mass lost), sigma = 0.5.
  LinearEnv env;
  std::mt19937_64 rng(8);
  const auto tau = epopt::testing::linear_trajectory({0.4, -0.3, 0.5, 0.2}, 1.9, 0.5, rng);
  const double mu0 = 1.5, sd0 = 0.4, sigma = 0.5;
  const SourceDistribution prior({{"p", mu0, sd0, mu0 - 4 * sd0, mu0 + 4 * sd0}});
  const auto oracle = epopt::testing::conjugate_posterior(tau, mu0, sd0, sigma);
  std::vector<double> means;
  for (Sampling s : {Sampling::prior, Sampling::uniform}) {
    const auto samples = draw(s, prior, 10000, 80 + static_cast<int>(s));
    const auto w = importance_weights(samples, tau, prior, s, env, Vector::Constant(1, sigma));
    const auto [mean, var] = weighted_moments(w, "p");
    EXPECT_LT(epopt::testing::relative_error(mean, oracle.mean), 0.02) << to_string(s);
    EXPECT_LT(epopt::testing::relative_error(var, oracle.var), 0.05) << to_string(s);
    means.push_back(mean);
  }
  EXPECT_LT(epopt::testing::relative_error(means[0], means[1]), 0.03);
}

TEST(Refit, UniformWeightsGiveArithmeticMean) {
  const SourceDistribution old({{"p", 1.0, 0.5, -1.0, 3.0}});
  std::vector<WeightedSample> w;
  double sum = 0;
  for (int i = 0; i < 10; ++i) {
    const double x = 0.1 * i;
    sum += x;
    w.push_back({ModelParams({"p"}, {x}), std::log(0.1), 0.1});
  }
  const auto r = refit_distribution(w, old, {0.01});
  EXPECT_NEAR(r.source.dims()[0].mu, sum / 10, 1e-12);
  EXPECT_NEAR(r.ess, 10.0, 1e-9);
  EXPECT_FALSE(r.low_ess_warning);
}

TEST(Refit, PointMassCollapsesToFloorAndWarns) {
  const SourceDistribution old({{"p", 1.0, 0.5, -1.0, 3.0}});
  std::vector<WeightedSample> w = {{ModelParams({"p"}, {0.2}), -INFINITY, 0.0},
                                   {ModelParams({"p"}, {1.7}), 0.0, 1.0},
                                   {ModelParams({"p"}, {2.2}), -INFINITY, 0.0}};
  const auto r = refit_distribution(w, old, {0.005});
  EXPECT_EQ(r.source.dims()[0].mu, 1.7);
  EXPECT_EQ(r.source.dims()[0].sigma, 0.005);
  EXPECT_TRUE(r.low_ess_warning);
}

TEST(Refit, WeightedVarianceMatchesTwoPass) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  const SourceDistribution old({{"a", 0.5, 0.3, 0.0, 1.0}, {"b", 5.0, 0.0, 4.0, 6.0}});
  std::vector<WeightedSample> w;
  double total = 0;
  for (int i = 0; i < 500; ++i) {
    const double x = u(rng);
    const double wt = u(rng);
    total += wt;
    w.push_back({ModelParams({"a", "b"}, {x, 5.0}), 0, wt});
  }
  for (auto& s : w) s.weight /= total;
  // Two-pass oracle in long double.
  long double m = 0, v = 0;
  for (const auto& s : w) m += (long double)s.weight * s.params.at("a");
  for (const auto& s : w) v += (long double)s.weight * std::pow((long double)s.params.at("a") - m, 2);
  const auto r = refit_distribution(w, old, {1e-6, 0.0});
  EXPECT_NEAR(r.source.dims()[0].mu, (double)m, 1e-12);
  EXPECT_NEAR(r.source.dims()[0].sigma * r.source.dims()[0].sigma, (double)v, 1e-10);
  EXPECT_EQ(r.source.dims()[1], old.dims()[1]);  // frozen dimension untouched
}

TEST(Refit, BoundsShrinkAndContainMean) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    const SourceDistribution old({{"p", 1.0, 0.4, 0.2, 1.8}});
    std::uniform_real_distribution<double> u(0.2, 1.8);
    std::uniform_real_distribution<double> lw(-20, 0);
    std::vector<WeightedSample> w;
    const int n = 1 + trial % 30;
    for (int i = 0; i < n; ++i) w.push_back({ModelParams({"p"}, {u(rng)}), lw(rng), 0});
    normalize_weights(w);
    const auto d = refit_distribution(w, old, {0.004}).source.dims()[0];
    EXPECT_LT(d.low, d.high);
    EXPECT_GE(d.mu, d.low);
    EXPECT_LE(d.mu, d.high);
    EXPECT_GE(d.low, 0.2);
    EXPECT_LE(d.high, 1.8);
  }
}

TEST(Sampling, UniformCoversBoundsAndKeepsFrozen) {
  const SourceDistribution prior({{"a", 1.0, 0.1, 0.0, 4.0}, {"b", 2.0, 0.0, 1.0, 3.0}});
  const auto s = draw(Sampling::uniform, prior, 4000, 11);
  double hi = 0;
  for (const auto& p : s) {
    EXPECT_EQ(p.at("b"), 2.0);
    hi = std::max(hi, p.at("a"));
  }
  EXPECT_GT(hi, 3.9);  // a N(1, 0.1) draw would essentially never reach this
  EXPECT_NEAR(sampling_log_density(Sampling::uniform, prior, s[0]), -std::log(4.0), 1e-12);
  EXPECT_THROW(parse_sampling("gaussian"), ConfigError);
}

namespace {

AdaptConfig tiny_adapt(int rounds) {
  AdaptConfig a;
  a.m = 50;
  a.rounds = rounds;
  a.epopt.niter = 2;
  a.epopt.n = 4;
  a.epopt.horizon = 20;
  a.epopt.hidden = {4, 4};
  a.seed = 3;
  return a;
}

}  // namespace

TEST(AdaptLoop, ZeroRoundsReturnsInitialSource) {
  PendulumEnv env;
  TargetDomain target(env, ModelParams({"m", "l", "c"}, {1.5, 1.0, 0.1}));
  const auto src = default_source("pendulum");
  const auto r = adapt_loop(target, env, src, tiny_adapt(0));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].source, src);
  EXPECT_EQ(target.episodes(), 0);
}

TEST(AdaptLoop, OneTargetEpisodePerRound) {
  PendulumEnv env;
  TargetDomain target(env, ModelParams({"m", "l", "c"}, {1.5, 1.0, 0.1}));
  int calls = 0;
  AdaptHooks hooks;
  hooks.on_round = [&](const AdaptRecord& rec) {
    EXPECT_EQ(rec.round, calls);
    EXPECT_EQ(target.episodes(), calls);
    ++calls;
  };
  const auto r = adapt_loop(target, env, default_source("pendulum"), tiny_adapt(3), hooks);
  EXPECT_EQ(r.records.size(), 4u);
  EXPECT_EQ(target.episodes(), 3);
  for (std::size_t i = 1; i < r.records.size(); ++i) {
    EXPECT_TRUE(r.records[i].ess.has_value());
    EXPECT_TRUE(r.records[i].target_return.has_value());
  }
}

TEST(AdaptLoop, IsDeterministic) {
  PendulumEnv env;
  auto run = [&] {
    TargetDomain target(env, ModelParams({"m", "l", "c"}, {1.5, 1.0, 0.1}), 0.01);
    return adapt_loop(target, env, default_source("pendulum"), tiny_adapt(2));
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.records.back().to_json().dump(), b.records.back().to_json().dump());
}

TEST(AdaptConfig, Validation) {
  PendulumEnv env;
  auto a = tiny_adapt(1);
  a.m = 1;
  EXPECT_THROW(a.validate(env), ConfigError);
  a = tiny_adapt(1);
  a.sigma_lik = Vector::Constant(2, -1.0);
  EXPECT_THROW(a.validate(env), ConfigError);
  a.sigma_lik = Vector();
  EXPECT_EQ(a.resolved_sigma_lik(env), Vector::Constant(2, 0.05));
}
