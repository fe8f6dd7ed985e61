#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "epopt/epopt.h"
#include "epopt/mdp.h"
#include "epopt/policy.h"

namespace epopt {

struct WeightedSample {
  ModelParams params;
  double log_weight = 0.0;  // normalized: log-sum-exp over the set is 0
  double weight = 0.0;
};

// Where posterior samples are drawn from. Uniform covers the current
// [low, high] box of every non-frozen dimension; frozen dimensions stay at mu.
enum class Sampling { prior, uniform };

std::string to_string(Sampling s);
Sampling parse_sampling(const std::string& s);

ModelParams draw_sample(Sampling sampling, const SourceDistribution& prior, Rng& rng);
double sampling_log_density(Sampling sampling, const SourceDistribution& prior,
                            const ModelParams& p);

// Sum over steps of log N(next_states[t]; f_p(states[t], actions[t]), diag(sigma_lik^2)),
// where f_p is the env's one-step map.
double trajectory_log_likelihood(const Trajectory& tau, const ModelParams& p,
                                 const Environment& env, const Vector& sigma_lik);

// log w_i = loglik + log prior - log sampling density, normalized.
// Throws DegeneratePosterior when every weight is zero.
std::vector<WeightedSample> importance_weights(const std::vector<ModelParams>& samples,
                                               const Trajectory& tau,
                                               const SourceDistribution& prior, Sampling sampling,
                                               const Environment& env, const Vector& sigma_lik,
                                               std::size_t workers = 1);

// Normalizes log weights in place (log-sum-exp) and fills `weight`.
void normalize_weights(std::vector<WeightedSample>& samples);

double effective_sample_size(const std::vector<WeightedSample>& samples);

inline constexpr double kLowEssThreshold = 5.0;

struct RefitResult {
  SourceDistribution source;
  double ess = 0.0;
  bool low_ess_warning = false;
};

// Weighted Gaussian refit per dimension. sigma_floor is indexed like
// old.dims(); frozen dimensions are copied unchanged. Bounds only shrink.
RefitResult refit_distribution(const std::vector<WeightedSample>& weighted,
                               const SourceDistribution& old,
                               const std::vector<double>& sigma_floor);

struct AdaptConfig {
  int m = 1000;
  Sampling sampling = Sampling::uniform;
  Vector sigma_lik;  // empty: 0.05 * env state_scale
  int rounds = 10;
  EpoptConfig epopt;
  double sigma_floor_fraction = 0.01;  // of the initial sigma
  std::uint64_t seed = 0;

  Vector resolved_sigma_lik(const Environment& env) const;
  void validate(const Environment& env) const;
};

// The real system: hidden parameters (which may include values for
// dimensions the source never varies) and optional additive Gaussian noise on
// every transition. The adaptation code only sees the trajectories.
class TargetDomain {
 public:
  TargetDomain(const Environment& env, ModelParams hidden, double state_noise = 0.0);

  Trajectory run_episode(const GaussianMlpPolicy& policy, Rng& rng, std::size_t horizon = 0);
  int episodes() const { return episodes_; }
  const ModelParams& hidden_params() const { return hidden_; }

 private:
  const Environment& env_;
  ModelParams hidden_;
  double state_noise_;
  int episodes_ = 0;
};

struct AdaptRecord {
  int round = 0;  // 0 is the initial distribution
  SourceDistribution source;
  std::optional<double> ess;
  std::optional<double> target_return;  // undiscounted
  bool low_ess_warning = false;

  Json to_json() const;
};

struct AdaptResult {
  GaussianMlpPolicy policy;
  std::vector<AdaptRecord> records;  // rounds + 1 entries
};

struct AdaptHooks {
  std::function<void(const AdaptRecord&)> on_round;
};

// Each round: train EPOpt on the current source (warm-started from the
// previous round's policy), run one target episode, condition on it and refit.
AdaptResult adapt_loop(TargetDomain& target, const Environment& model,
                       const SourceDistribution& initial_source, const AdaptConfig& config,
                       const AdaptHooks& hooks = {});

}  // namespace epopt
