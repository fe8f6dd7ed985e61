#include "epopt/adaptation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "epopt/error.h"
#include "epopt/parallel.h"
#include "epopt/rollout.h"

namespace epopt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Json optional_number(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

}  // namespace

std::string to_string(Sampling s) { return s == Sampling::prior ? "prior" : "uniform"; }

Sampling parse_sampling(const std::string& s) {
  if (s == "prior") return Sampling::prior;
  if (s == "uniform") return Sampling::uniform;
  throw ConfigError("unknown sampling distribution '" + s + "' (expected prior or uniform)");
}

ModelParams draw_sample(Sampling sampling, const SourceDistribution& prior, Rng& rng) {
  if (sampling == Sampling::prior) return sample_params(prior, rng);
  std::vector<double> values;
  for (const auto& d : prior.dims()) {
    if (d.frozen()) {
      values.push_back(d.mu);
    } else {
      values.push_back(std::uniform_real_distribution<double>(d.low, d.high)(rng));
    }
  }
  return ModelParams(prior.names(), std::move(values));
}

double sampling_log_density(Sampling sampling, const SourceDistribution& prior,
                            const ModelParams& p) {
  if (sampling == Sampling::prior) return log_density(prior, p);
  double total = 0.0;
  for (const auto& d : prior.dims()) {
    const double x = p.at(d.name);
    if (d.frozen()) {
      if (x != d.mu) return kNegInf;
      continue;
    }
    if (x < d.low || x > d.high) return kNegInf;
    total -= std::log(d.high - d.low);
  }
  return total;
}

double trajectory_log_likelihood(const Trajectory& tau, const ModelParams& p,
                                 const Environment& env, const Vector& sigma_lik) {
  const auto d = static_cast<Eigen::Index>(env.spec().state_dim);
  if (sigma_lik.size() != d) {
    throw DimensionMismatch("sigma_lik has " + std::to_string(sigma_lik.size()) +
                            " entries, state has " + std::to_string(d));
  }
  if (!(sigma_lik.array() > 0.0).all()) throw ConfigError("sigma_lik must be > 0");
  if (tau.states.size() != tau.length() || tau.next_states.size() != tau.length() ||
      tau.actions.size() != tau.length()) {
    throw DimensionMismatch("trajectory has inconsistent field lengths");
  }
  const double log_norm =
      -(sigma_lik.array().log().sum()) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (std::size_t t = 0; t < tau.length(); ++t) {
    if (tau.states[t].size() != d || tau.next_states[t].size() != d) {
      throw DimensionMismatch("trajectory state dimension does not match env '" +
                              env.spec().name + "'");
    }
    const Vector predicted = env.step(tau.states[t], tau.actions[t], p).next_state;
    const Vector z = (tau.next_states[t] - predicted).cwiseQuotient(sigma_lik);
    total += log_norm - 0.5 * z.squaredNorm();
  }
  return total;
}

void normalize_weights(std::vector<WeightedSample>& samples) {
  double top = kNegInf;
  for (const auto& s : samples) top = std::max(top, s.log_weight);
  if (!std::isfinite(top)) {
    throw DegeneratePosterior(
        "every posterior sample has zero weight: no sampled model explains the target "
        "trajectory; use a wider sampling distribution or a larger sigma_lik");
  }
  double sum = 0.0;
  for (const auto& s : samples) sum += std::exp(s.log_weight - top);
  const double log_z = top + std::log(sum);
  for (auto& s : samples) {
    s.log_weight -= log_z;
    s.weight = std::exp(s.log_weight);
  }
}

std::vector<WeightedSample> importance_weights(const std::vector<ModelParams>& samples,
                                               const Trajectory& tau,
                                               const SourceDistribution& prior, Sampling sampling,
                                               const Environment& env, const Vector& sigma_lik,
                                               std::size_t workers) {
  if (samples.empty()) throw Error("importance_weights: no samples");
  std::vector<WeightedSample> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    out[i].params = samples[i];
    const double lp = log_density(prior, samples[i]);
    const double ls = sampling_log_density(sampling, prior, samples[i]);
    if (lp == kNegInf) {
      out[i].log_weight = kNegInf;
      return;
    }
    if (ls == kNegInf) throw Error("importance_weights: sample outside the sampling support");
    out[i].log_weight = trajectory_log_likelihood(tau, samples[i], env, sigma_lik) + lp - ls;
    if (std::isnan(out[i].log_weight)) out[i].log_weight = kNegInf;
  });
  normalize_weights(out);
  return out;
}

double effective_sample_size(const std::vector<WeightedSample>& samples) {
  double sq = 0.0;
  for (const auto& s : samples) sq += s.weight * s.weight;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

RefitResult refit_distribution(const std::vector<WeightedSample>& weighted,
                               const SourceDistribution& old,
                               const std::vector<double>& sigma_floor) {
  if (weighted.empty()) throw Error("refit_distribution: no samples");
  if (sigma_floor.size() != old.size()) {
    throw DimensionMismatch("refit_distribution: sigma_floor has " +
                            std::to_string(sigma_floor.size()) + " entries, source has " +
                            std::to_string(old.size()));
  }
  std::vector<TruncatedGaussian> dims;
  for (std::size_t j = 0; j < old.size(); ++j) {
    const auto& d = old.dims()[j];
    if (d.frozen()) {
      dims.push_back(d);
      continue;
    }
    if (!(sigma_floor[j] > 0.0)) throw ConfigError("sigma floor for '" + d.name + "' must be > 0");
    double mu = 0.0;
    for (const auto& s : weighted) mu += s.weight * s.params.at(d.name);
    double var = 0.0;
    for (const auto& s : weighted) {
      const double r = s.params.at(d.name) - mu;
      var += s.weight * r * r;
    }
    mu = std::clamp(mu, d.low, d.high);
    const double sigma = std::max(std::sqrt(var), sigma_floor[j]);
    double low = std::max(d.low, mu - 3.0 * sigma);
    double high = std::min(d.high, mu + 3.0 * sigma);
    dims.push_back({d.name, mu, sigma, low, high});
  }
  RefitResult result{SourceDistribution(std::move(dims)), effective_sample_size(weighted), false};
  result.low_ess_warning = result.ess < kLowEssThreshold;
  return result;
}

Vector AdaptConfig::resolved_sigma_lik(const Environment& env) const {
  if (sigma_lik.size() > 0) return sigma_lik;
  return 0.05 * env.spec().state_scale;
}

void AdaptConfig::validate(const Environment& env) const {
  if (m < 2) throw ConfigError("adapt.m must be >= 2");
  if (rounds < 0) throw ConfigError("adapt.rounds must be >= 0");
  if (!(sigma_floor_fraction > 0.0)) throw ConfigError("adapt.sigma_floor_fraction must be > 0");
  const Vector s = resolved_sigma_lik(env);
  if (s.size() != static_cast<Eigen::Index>(env.spec().state_dim)) {
    throw ConfigError("adapt.sigma_lik must have " + std::to_string(env.spec().state_dim) +
                      " entries");
  }
  if (!(s.array() > 0.0).all()) throw ConfigError("adapt.sigma_lik entries must be > 0");
  epopt.validate();
}

TargetDomain::TargetDomain(const Environment& env, ModelParams hidden, double state_noise)
    : env_(env), hidden_(std::move(hidden)), state_noise_(state_noise) {
  env_.check_params(hidden_);
  if (!(state_noise_ >= 0.0)) throw ConfigError("target state noise must be >= 0");
}

Trajectory TargetDomain::run_episode(const GaussianMlpPolicy& policy, Rng& rng,
                                     std::size_t horizon) {
  ++episodes_;
  if (horizon == 0) horizon = env_.spec().horizon;
  Trajectory tau = rollout(env_, hidden_, policy, horizon, rng);
  tau.model = ModelParams();  // hidden from the caller
  if (state_noise_ == 0.0 || tau.length() == 0) return tau;

  // Perturbed replay: same actions, noisy transitions. Rewards come from the
  // noiseless step of the perturbed state.
  Trajectory noisy;
  Vector state = tau.states.front();
  for (std::size_t t = 0; t < tau.length(); ++t) {
    const Vector& action = tau.actions[t];
    StepOutcome out = env_.step(state, action, hidden_);
    for (Eigen::Index i = 0; i < out.next_state.size(); ++i) {
      out.next_state[i] += state_noise_ * env_.spec().state_scale[i] * standard_normal(rng);
    }
    noisy.states.push_back(state);
    noisy.observations.push_back(env_.observe(state));
    noisy.actions.push_back(action);
    noisy.rewards.push_back(out.reward);
    noisy.log_probs.push_back(policy.log_prob(noisy.observations.back(), action));
    noisy.next_states.push_back(out.next_state);
    state = out.next_state;
    if (out.terminated) {
      noisy.terminated = true;
      break;
    }
  }
  return noisy;
}

Json AdaptRecord::to_json() const {
  Json j = Json::object();
  j["round"] = round;
  j["source"] = source.to_json();
  j["ess"] = optional_number(ess);
  j["target_return"] = optional_number(target_return);
  j["low_ess_warning"] = low_ess_warning;
  return j;
}

AdaptResult adapt_loop(TargetDomain& target, const Environment& model,
                       const SourceDistribution& initial_source, const AdaptConfig& config,
                       const AdaptHooks& hooks) {
  config.validate(model);
  const Vector sigma_lik = config.resolved_sigma_lik(model);
  std::vector<double> floor;
  for (const auto& d : initial_source.dims()) floor.push_back(config.sigma_floor_fraction * d.sigma);

  AdaptResult result;
  result.records.push_back({0, initial_source, std::nullopt, std::nullopt, false});
  if (hooks.on_round) hooks.on_round(result.records.back());

  EpoptConfig round_config = config.epopt;
  std::optional<GaussianMlpPolicy> policy;
  SourceDistribution source = initial_source;
  for (int r = 1; r <= config.rounds; ++r) {
    const auto round = static_cast<std::uint64_t>(r);
    round_config.seed = make_stream(config.seed, {stream_tag::adapt_round, round})();
    try {
      policy = epopt_train(model, source, round_config, policy).policy;

      Rng target_rng = make_stream(config.seed, {stream_tag::adapt_target, round});
      const Trajectory tau = target.run_episode(*policy, target_rng, round_config.horizon);

      Rng sample_rng = make_stream(config.seed, {stream_tag::adapt_samples, round});
      std::vector<ModelParams> samples;
      samples.reserve(static_cast<std::size_t>(config.m));
      for (int i = 0; i < config.m; ++i) samples.push_back(draw_sample(config.sampling, source, sample_rng));
      const auto weighted = importance_weights(samples, tau, source, config.sampling, model,
                                               sigma_lik, config.epopt.workers);
      RefitResult refit = refit_distribution(weighted, source, floor);
      source = refit.source;
      result.records.push_back(
          {r, source, refit.ess, undiscounted_return(tau), refit.low_ess_warning});
    } catch (const DegeneratePosterior& e) {
      throw DegeneratePosterior("adaptation round " + std::to_string(r) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("adaptation round " + std::to_string(r) + ": " + e.what());
    }
    if (hooks.on_round) hooks.on_round(result.records.back());
  }
  result.policy = policy ? *policy : initial_policy(model, config.epopt);
  return result;
}

}  // namespace epopt
