#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <cmath>
#include <random>
#include <vector>

#include "epopt/mdp.h"

namespace epopt::testing {

// s' = p * s + a with one parameter "p". Small enough for closed-form
// Bayesian oracles.
class LinearEnv final : public Environment {
 public:
  LinearEnv() {
    spec_.name = "linear";
    spec_.state_dim = 1;
    spec_.obs_dim = 1;
    spec_.action_dim = 1;
    spec_.action_low = Vector::Constant(1, -1e9);
    spec_.action_high = Vector::Constant(1, 1e9);
    spec_.horizon = 20;
    spec_.param_names = {"p"};
    spec_.state_scale = Vector::Ones(1);
  }
  const EnvSpec& spec() const override { return spec_; }
  Vector reset(const ModelParams&, Rng&) const override { return Vector::Ones(1); }
  StepOutcome step(const Vector& s, const Vector& a, const ModelParams& p) const override {
    StepOutcome out;
    out.next_state = p.at("p") * s + a;
    out.reward = -s.squaredNorm();
    return out;
  }

 private:
  EnvSpec spec_;
};

// A trajectory with the given states, zero actions and s'_t = p * s_t + noise.
inline Trajectory linear_trajectory(const std::vector<double>& states, double p, double noise_sd,
                                    std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, noise_sd);
  Trajectory tau;
  for (double s : states) {
    tau.states.push_back(Vector::Constant(1, s));
    tau.observations.push_back(Vector::Constant(1, s));
    tau.actions.push_back(Vector::Zero(1));
    tau.rewards.push_back(-s * s);
    tau.log_probs.push_back(0.0);
    tau.next_states.push_back(Vector::Constant(1, p * s + (noise_sd > 0 ? noise(rng) : 0.0)));
  }
  return tau;
}

// Closed-form posterior of p under prior N(mu0, sd0^2) and likelihood
// s'_t ~ N(p s_t, sigma^2).
struct GaussianPosterior {
  double mean;
  double var;
};
inline GaussianPosterior conjugate_posterior(const Trajectory& tau, double mu0, double sd0,
                                             double sigma) {
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t t = 0; t < tau.length(); ++t) {
    sxx += tau.states[t][0] * tau.states[t][0];
    sxy += tau.states[t][0] * tau.next_states[t][0];
  }
  const double precision = 1.0 / (sd0 * sd0) + sxx / (sigma * sigma);
  return {(mu0 / (sd0 * sd0) + sxy / (sigma * sigma)) / precision, 1.0 / precision};
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace epopt::testing
