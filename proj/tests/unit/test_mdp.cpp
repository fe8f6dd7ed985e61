#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "epopt/environments.h"
#include "epopt/error.h"
#include "epopt/mdp.h"

using namespace epopt;

TEST(ModelParams, LookupAndErrors) {
  ModelParams p({"m", "l"}, {1.5, 0.8});
  EXPECT_EQ(p.at("l"), 0.8);
  EXPECT_TRUE(p.contains("m"));
  EXPECT_THROW(p.at("k"), UnknownParameter);
  EXPECT_EQ(p.get_or("k", 7.0), 7.0);
  EXPECT_EQ(p.with("k", 2.0).at("k"), 2.0);
  EXPECT_EQ(p.with("m", 2.0).at("m"), 2.0);
  EXPECT_THROW(ModelParams({"m"}, {1.0, 2.0}), DimensionMismatch);
  EXPECT_THROW(ModelParams({"m", "m"}, {1.0, 2.0}), ConfigError);
}

TEST(ModelParams, JsonRoundTripKeepsOrder) {
  ModelParams p({"z", "a", "m"}, {0.1, 0.2, 0.3});
  EXPECT_EQ(ModelParams::from_json(p.to_json()), p);
  EXPECT_EQ(p.to_json().dump(), R"({"z":0.1,"a":0.2,"m":0.3})");
}

TEST(SourceDistribution, Validation) {
  EXPECT_THROW(SourceDistribution({{"m", 1.0, 0.1, 2.0, 1.0}}), ConfigError);
  EXPECT_THROW(SourceDistribution({{"m", 1.0, -0.1, 0.0, 2.0}}), ConfigError);
  EXPECT_THROW(SourceDistribution({{"m", 3.0, 0.1, 0.0, 2.0}}), ConfigError);
  EXPECT_THROW(SourceDistribution(std::vector<TruncatedGaussian>{}), ConfigError);
  EXPECT_NO_THROW(SourceDistribution({{"m", 1.0, 0.0, 0.0, 2.0}}));
}

TEST(SourceDistribution, JsonRoundTripIsIdentity) {
  for (const auto& name : env_names()) {
    const auto src = default_source(name);
    EXPECT_EQ(SourceDistribution::from_json(src.to_json()), src);
  }
}

TEST(SourceDistribution, MissingFieldIsNamed) {
  Json j = Json::parse(R"({"m": {"sigma": 0.1, "low": 0, "high": 2}})");
  try {
    SourceDistribution::from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("source.m.mu"), std::string::npos);
  }
}

TEST(SampleParams, StaysInBoundsAndFrozenIsExact) {
  SourceDistribution d({{"a", 0.0, 1.0, -0.5, 2.0}, {"b", 3.0, 0.0, 1.0, 4.0}});
  Rng rng = make_stream(1, {7});
  for (int i = 0; i < 5000; ++i) {
    const auto p = sample_params(d, rng);
    EXPECT_GE(p.at("a"), -0.5);
    EXPECT_LE(p.at("a"), 2.0);
    EXPECT_EQ(p.at("b"), 3.0);
  }
}

TEST(SampleParams, NarrowBandFarInTailThrows) {
  SourceDistribution d({{"a", 0.0, 1e-3, 0.0, 1.0}});
  // mu is inside the band but half of the mass is below it; a band far away
  // cannot be constructed (mu must be in bounds), so use a tiny attempt cap.
  SourceDistribution far({{"a", 0.0, 1.0, 0.0, 1e-9}});
  Rng rng = make_stream(2, {});
  EXPECT_THROW(sample_params(far, rng, 50), TruncationError);
  EXPECT_NO_THROW(sample_params(d, rng));
}

TEST(SampleParams, MatchesTruncatedNormalMoments) {
  // Oracle: mean of N(mu, s^2) truncated to [lo, hi] is
  // mu + s (phi(a) - phi(b)) / (Phi(b) - Phi(a)).
  const double mu = 1.0, s = 0.5, lo = 0.8, hi = 2.5;
  SourceDistribution d({{"x", mu, s, lo, hi}});
  auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi); };
  const double a = (lo - mu) / s, b = (hi - mu) / s;
  const double expected = mu + s * (phi(a) - phi(b)) / (normal_cdf(b) - normal_cdf(a));
  Rng rng = make_stream(3, {});
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += sample_params(d, rng).at("x");
  EXPECT_NEAR(sum / n, expected, 4e-3);
}

TEST(LogDensity, IntegratesToOne) {
  SourceDistribution d({{"x", 0.3, 0.7, -0.2, 1.9}});
  const int steps = 20000;
  const double h = (1.9 + 0.2) / steps;
  double total = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double x = -0.2 + (i + 0.5) * h;
    total += std::exp(log_density(d, ModelParams({"x"}, {x}))) * h;
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
  EXPECT_EQ(log_density(d, ModelParams({"x"}, {2.0})), -INFINITY);
}

TEST(LogDensity, FrozenDimension) {
  SourceDistribution d({{"x", 0.5, 0.0, 0.0, 1.0}});
  EXPECT_EQ(log_density(d, ModelParams({"x"}, {0.5})), 0.0);
  EXPECT_EQ(log_density(d, ModelParams({"x"}, {0.6})), -INFINITY);
}

TEST(Returns, DiscountedAndToGo) {
  Trajectory tau;
  tau.rewards = {1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(discounted_return(tau, 0.5), 1.0 + 1.0 + 0.75);
  EXPECT_DOUBLE_EQ(undiscounted_return(tau), 6.0);
  const auto rtg = returns_to_go(tau, 0.5);
  ASSERT_EQ(rtg.size(), 3u);
  EXPECT_DOUBLE_EQ(rtg[0], discounted_return(tau, 0.5));
  EXPECT_DOUBLE_EQ(rtg[1], 2.0 + 1.5);
  EXPECT_DOUBLE_EQ(rtg[2], 3.0);
}

TEST(Returns, ToGoMatchesDirectSum) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  Trajectory tau;
  for (int i = 0; i < 50; ++i) tau.rewards.push_back(u(rng));
  const auto rtg = returns_to_go(tau, 0.97);
  for (std::size_t t = 0; t < 50; ++t) {
    double direct = 0.0;
    for (std::size_t k = t; k < 50; ++k) direct += std::pow(0.97, double(k - t)) * tau.rewards[k];
    EXPECT_NEAR(rtg[t], direct, 1e-12);
  }
}

TEST(Random, StreamsAreIndependentOfOrder) {
  Rng a = make_stream(9, {1, 2});
  Rng b = make_stream(9, {1, 3});
  Rng a2 = make_stream(9, {1, 2});
  EXPECT_EQ(a(), a2());
  EXPECT_NE(make_stream(9, {1, 2})(), b());
}
