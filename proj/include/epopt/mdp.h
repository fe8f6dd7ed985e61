#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "epopt/random.h"

namespace epopt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Insertion-ordered JSON: dimension order in files is significant.
using Json = nlohmann::ordered_json;

// Named physical parameters of one member of the model family.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(std::vector<std::string> names, std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& values() const { return values_; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  // Throws UnknownParameter.
  double at(std::string_view name) const;
  double get_or(std::string_view name, double fallback) const;

  // Copy with `name` set to `value`, appended if absent.
  ModelParams with(std::string_view name, double value) const;

  bool operator==(const ModelParams&) const = default;

  Json to_json() const;
  static ModelParams from_json(const Json& j);

 private:
  std::vector<std::string> names_;
  std::vector<double> values_;
};

// One marginal of the source distribution: N(mu, sigma^2) truncated to
// [low, high]. sigma == 0 denotes a frozen (point-mass) dimension.
struct TruncatedGaussian {
  std::string name;
  double mu = 0.0;
  double sigma = 1.0;
  double low = -1.0;
  double high = 1.0;

  bool frozen() const { return sigma == 0.0; }
  bool operator==(const TruncatedGaussian&) const = default;
};

// Product of independent truncated Gaussians, one per physical parameter.
class SourceDistribution {
 public:
  SourceDistribution() = default;
  explicit SourceDistribution(std::vector<TruncatedGaussian> dims);

  const std::vector<TruncatedGaussian>& dims() const { return dims_; }
  std::size_t size() const { return dims_.size(); }
  std::vector<std::string> names() const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  const TruncatedGaussian& dim(std::string_view name) const;

  ModelParams mean() const;
  // Same distribution with `name` pinned at its mean.
  SourceDistribution frozen(std::string_view name) const;
  // Every dimension pinned at its mean: the single maximum-likelihood model.
  SourceDistribution point_mass() const;

  bool operator==(const SourceDistribution&) const = default;

  // {"m": {"mu":..,"sigma":..,"low":..,"high":..}, ...}; key order is the
  // dimension order.
  Json to_json() const;
  static SourceDistribution from_json(const Json& j);

 private:
  std::vector<TruncatedGaussian> dims_;
};

inline constexpr std::size_t kDefaultTruncationAttempts = 10000;

ModelParams sample_params(const SourceDistribution& dist, Rng& rng,
                          std::size_t max_attempts = kDefaultTruncationAttempts);

// Sum of per-dimension truncated-Gaussian log densities; -inf outside the
// support. Frozen dimensions contribute 0 at the pinned value.
double log_density(const SourceDistribution& dist, const ModelParams& p);

double normal_cdf(double x);

struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> observations;  // policy inputs, observe(states[t])
  std::vector<Vector> actions;       // raw policy samples, before clipping
  std::vector<double> rewards;
  std::vector<double> log_probs;
  std::vector<Vector> next_states;
  bool terminated = false;
  ModelParams model;

  std::size_t length() const { return rewards.size(); }
};

double discounted_return(const Trajectory& tau, double gamma);
double undiscounted_return(const Trajectory& tau);
// R_t = sum_{t' >= t} gamma^{t'-t} r_{t'} for every t.
std::vector<double> returns_to_go(const Trajectory& tau, double gamma);

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;
  Vector action_low;
  Vector action_high;
  std::size_t horizon = 0;
  std::vector<std::string> param_names;
  // Characteristic magnitude per state coordinate; scales likelihood noise.
  Vector state_scale;

  void validate() const;
};

struct StepOutcome {
  Vector next_state;
  double reward = 0.0;
  bool terminated = false;
};

// A parametrized MDP family. Implementations are stateless: every call is a
// pure function of its arguments, so one instance serves concurrent rollouts.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(const ModelParams& p, Rng& rng) const = 0;
  virtual StepOutcome step(const Vector& state, const Vector& action,
                           const ModelParams& p) const = 0;
  virtual Vector observe(const Vector& state) const { return state; }

  // Throws UnknownParameter if p lacks a name the dynamics need.
  void check_params(const ModelParams& p) const;
};

}  // namespace epopt
