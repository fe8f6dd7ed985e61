#include "epopt/environments.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "epopt/error.h"

namespace epopt {

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

double uniform(Rng& rng, double half_width) {
  if (half_width <= 0.0) return 0.0;
  std::uniform_real_distribution<double> dist(-half_width, half_width);
  return dist(rng);
}

void require_finite_input(const Vector& state, const Vector& action, const std::string& env) {
  if (!state.allFinite() || !action.allFinite()) {
    throw NumericalBlowup(env + ": non-finite state or action", 0);
  }
}

}  // namespace

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w < 0) w += two_pi;
  w -= std::numbers::pi;
  // fmod maps +pi to -pi; the interval is closed on the right.
  return w == -std::numbers::pi ? std::numbers::pi : w;
}

PendulumEnv::PendulumEnv() : PendulumEnv(Config{}) {}

PendulumEnv::PendulumEnv(Config config) : config_(config) {
  if (!(config_.dt > 0.0)) throw ConfigError("pendulum: dt must be positive");
  if (!(config_.max_torque > 0.0)) throw ConfigError("pendulum: max_torque must be positive");
  spec_.name = "pendulum";
  spec_.state_dim = 2;
  spec_.obs_dim = 3;
  spec_.action_dim = 1;
  spec_.action_low = Vector::Constant(1, -config_.max_torque);
  spec_.action_high = Vector::Constant(1, config_.max_torque);
  spec_.horizon = config_.horizon;
  spec_.param_names = {"m", "l", "c"};
  spec_.state_scale = Vector::Ones(2);
  spec_.validate();
}

Vector PendulumEnv::reset(const ModelParams&, Rng& rng) const {
  const double theta = std::numbers::pi + uniform(rng, config_.init_angle_noise);
  const double theta_dot = uniform(rng, config_.init_velocity_noise);
  return vec2(theta, theta_dot);
}

StepOutcome PendulumEnv::step(const Vector& state, const Vector& action,
                              const ModelParams& p) const {
  require_finite_input(state, action, spec_.name);
  const double m = p.at("m");
  const double l = p.at("l");
  const double c = p.at("c");
  const double theta = state[0];
  const double theta_dot = state[1];
  const double torque = std::clamp(action[0], -config_.max_torque, config_.max_torque);

  const double accel =
      (config_.gravity / l) * std::sin(theta) + (torque - c * theta_dot) / (m * l * l);
  const double next_theta_dot = theta_dot + config_.dt * accel;
  const double next_theta = theta + config_.dt * next_theta_dot;

  StepOutcome out;
  out.next_state = vec2(next_theta, next_theta_dot);
  if (!out.next_state.allFinite()) throw NumericalBlowup("pendulum: non-finite next state", 0);
  const double wrapped = wrap_angle(theta);
  out.reward = -(wrapped * wrapped + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque);
  out.terminated = false;
  return out;
}

Vector PendulumEnv::observe(const Vector& state) const {
  Vector obs(3);
  obs << std::cos(state[0]), std::sin(state[0]), state[1];
  return obs;
}

double PendulumEnv::energy(const Vector& state, const ModelParams& p) const {
  const double m = p.at("m");
  const double l = p.at("l");
  return 0.5 * m * l * l * state[1] * state[1] + m * config_.gravity * l * std::cos(state[0]);
}

SpringHopperEnv::SpringHopperEnv() : SpringHopperEnv(Config{}) {}

SpringHopperEnv::SpringHopperEnv(Config config) : config_(config) {
  if (!(config_.dt > 0.0)) throw ConfigError("spring_hopper: dt must be positive");
  if (!(config_.max_thrust > 0.0)) throw ConfigError("spring_hopper: max_thrust must be positive");
  spec_.name = "spring_hopper";
  spec_.state_dim = 2;
  spec_.obs_dim = 2;
  spec_.action_dim = 1;
  spec_.action_low = Vector::Constant(1, -config_.max_thrust);
  spec_.action_high = Vector::Constant(1, config_.max_thrust);
  spec_.horizon = config_.horizon;
  spec_.param_names = {"m", "k", "c"};
  spec_.state_scale = Vector::Ones(2);
  spec_.validate();
}

double SpringHopperEnv::rest_length(const ModelParams& p) const {
  return p.get_or("l0", config_.rest_length);
}

Vector SpringHopperEnv::reset(const ModelParams& p, Rng& rng) const {
  const double l0 = rest_length(p);
  const double noise = config_.init_height_noise > 0.0
                           ? std::uniform_real_distribution<double>(0.0, config_.init_height_noise)(rng)
                           : 0.0;
  return vec2(l0 + config_.drop_height + noise, 0.0);
}

StepOutcome SpringHopperEnv::step(const Vector& state, const Vector& action,
                                  const ModelParams& p) const {
  require_finite_input(state, action, spec_.name);
  const double m = p.at("m");
  const double k = p.at("k");
  const double c = p.at("c");
  const double l0 = rest_length(p);
  if (!(m > 0.0) || !(k > 0.0) || !(l0 > 0.0)) {
    throw ConfigError("spring_hopper: requires m > 0, k > 0, l0 > 0");
  }
  const double z = state[0];
  const double z_dot = state[1];
  const double thrust = std::clamp(action[0], -config_.max_thrust, config_.max_thrust);

  double accel = -config_.gravity;
  if (z <= l0) accel += (k * (l0 - z) + thrust - c * z_dot) / m;
  const double next_z_dot = z_dot + config_.dt * accel;
  const double next_z = z + config_.dt * next_z_dot;

  StepOutcome out;
  out.next_state = vec2(next_z, next_z_dot);
  if (!out.next_state.allFinite()) throw NumericalBlowup("spring_hopper: non-finite next state", 0);
  const double crash_height = config_.crash_fraction * l0;
  out.terminated = z < crash_height || next_z < crash_height;
  out.reward = std::max(next_z_dot, 0.0) + (out.terminated ? 0.0 : config_.alive_bonus);
  return out;
}

std::vector<std::string> env_names() { return {"pendulum", "spring_hopper"}; }

std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "pendulum") return std::make_unique<PendulumEnv>();
  if (name == "spring_hopper") return std::make_unique<SpringHopperEnv>();
  throw ConfigError("unknown env '" + std::string(name) + "' (expected pendulum | spring_hopper)");
}

SourceDistribution default_source(std::string_view env_name) {
  if (env_name == "pendulum") {
    return SourceDistribution({{"m", 1.0, 0.3, 0.4, 1.6},
                               {"l", 1.0, 0.15, 0.7, 1.3},
                               {"c", 0.1, 0.05, 0.0, 0.2}});
  }
  if (env_name == "spring_hopper") {
    return SourceDistribution({{"m", 1.0, 0.25, 0.5, 1.5},
                               {"k", 50.0, 10.0, 30.0, 70.0},
                               {"c", 1.0, 0.4, 0.2, 2.0}});
  }
  throw ConfigError("unknown env '" + std::string(env_name) + "'");
}

}  // namespace epopt
