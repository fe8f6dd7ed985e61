#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "epopt/mdp.h"

namespace epopt {

// Torque-limited pendulum swing-up. State [theta, theta_dot] with theta = 0
// upright; episodes start hanging near theta = pi. Parameters: mass m,
// length l, joint damping c.
class PendulumEnv final : public Environment {
 public:
  struct Config {
    double gravity = 9.81;
    double dt = 0.05;
    double max_torque = 5.0;
    std::size_t horizon = 200;
    // Half-widths of the uniform initial-state perturbation around (pi, 0).
    double init_angle_noise = 0.1;
    double init_velocity_noise = 0.1;
  };

  PendulumEnv();
  explicit PendulumEnv(Config config);

  const EnvSpec& spec() const override { return spec_; }
  const Config& config() const { return config_; }
  Vector reset(const ModelParams& p, Rng& rng) const override;
  StepOutcome step(const Vector& state, const Vector& action, const ModelParams& p) const override;
  // [cos theta, sin theta, theta_dot]
  Vector observe(const Vector& state) const override;

  // m * l^2 * theta_dot^2 / 2 + m * g * l * cos(theta)
  double energy(const Vector& state, const ModelParams& p) const;

 private:
  Config config_;
  EnvSpec spec_;
};

// One-dimensional spring-leg hopper. Flight when z > l0 (ballistic), stance
// when z <= l0 (spring, damper and thrust act). Parameters: body mass m,
// stiffness k, damping c, and optionally rest length l0.
class SpringHopperEnv final : public Environment {
 public:
  struct Config {
    double gravity = 9.81;
    double dt = 0.01;
    double max_thrust = 10.0;
    std::size_t horizon = 500;
    double rest_length = 1.0;  // used when ModelParams has no "l0"
    double drop_height = 0.2;  // initial z - l0
    double init_height_noise = 0.05;
    double alive_bonus = 1.0;
    double crash_fraction = 0.3;
  };

  SpringHopperEnv();
  explicit SpringHopperEnv(Config config);

  const EnvSpec& spec() const override { return spec_; }
  const Config& config() const { return config_; }
  Vector reset(const ModelParams& p, Rng& rng) const override;
  StepOutcome step(const Vector& state, const Vector& action, const ModelParams& p) const override;

  double rest_length(const ModelParams& p) const;

 private:
  Config config_;
  EnvSpec spec_;
};

std::vector<std::string> env_names();
// "pendulum" | "spring_hopper"; throws ConfigError otherwise.
std::unique_ptr<Environment> make_env(std::string_view name);
SourceDistribution default_source(std::string_view env_name);

// Angle wrapped to (-pi, pi].
double wrap_angle(double theta);

}  // namespace epopt
