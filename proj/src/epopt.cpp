#include "epopt/epopt.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "epopt/csv.h"
#include "epopt/error.h"
#include "epopt/parallel.h"
#include "epopt/rollout.h"

namespace epopt {

void EpoptConfig::validate() const {
  if (niter < 0) throw ConfigError("epopt.niter must be >= 0");
  if (n < 1) throw ConfigError("epopt.n must be >= 1");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("epopt.epsilon must lie in (0, 1]");
  if (resolved_warmup() > niter) throw ConfigError("epopt.warmup_iters must be <= niter");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("epopt.gamma must lie in [0, 1]");
  if (!cvar_subsampling && epsilon != 1.0) {
    throw ConfigError("epopt: disabling CVaR subsampling requires epsilon = 1");
  }
  if (start_iteration < 0 || start_iteration > niter) {
    throw ConfigError("epopt.start_iteration must lie in [0, niter]");
  }
  if (baseline_ridge < 0.0) throw ConfigError("epopt.baseline_ridge must be >= 0");
  polopt.validate();
}

double percentile_threshold(std::span<const double> returns, double epsilon) {
  if (returns.empty()) throw Error("percentile_threshold: empty return batch");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw ConfigError("percentile_threshold: epsilon must lie in (0, 1]");
  }
  const std::size_t n = returns.size();
  // The small offset keeps products like 0.1 * 240 from rounding up a rank.
  auto k = static_cast<std::size_t>(std::ceil(epsilon * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::vector<double> sorted(returns.begin(), returns.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

std::vector<std::size_t> select_worst(std::span<const double> returns, double threshold) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < returns.size(); ++k) {
    if (returns[k] <= threshold) idx.push_back(k);
  }
  return idx;
}

double effective_epsilon(const EpoptConfig& config, int iteration) {
  return iteration < config.resolved_warmup() ? 1.0 : config.epsilon;
}

GaussianMlpPolicy initial_policy(const Environment& env, const EpoptConfig& config) {
  Rng rng = make_stream(config.seed, {stream_tag::policy_init});
  return GaussianMlpPolicy::initialized(env.spec().obs_dim, env.spec().action_dim, config.hidden,
                                        rng);
}

TrainResult epopt_train(const Environment& env, const SourceDistribution& source,
                        const EpoptConfig& config, const std::optional<GaussianMlpPolicy>& initial,
                        const TrainHooks& hooks) {
  config.validate();
  const std::size_t horizon = config.horizon > 0 ? config.horizon : env.spec().horizon;
  TrainResult result{initial ? *initial : initial_policy(env, config), {}};
  const auto n = static_cast<std::size_t>(config.n);

  for (int iter = config.start_iteration; iter < config.niter; ++iter) {
    const auto started = std::chrono::steady_clock::now();
    const double eps = effective_epsilon(config, iter);
    const GaussianMlpPolicy& policy = result.policy;

    std::vector<Trajectory> batch(n);
    try {
      parallel_for(n, config.workers, [&](std::size_t k) {
        Rng rng = make_stream(config.seed, {stream_tag::epopt_rollout,
                                            static_cast<std::uint64_t>(iter), k});
        const ModelParams p = sample_params(source, rng);
        batch[k] = rollout(env, p, policy, horizon, rng);
      });
    } catch (const Error& e) {
      throw Error("epopt iteration " + std::to_string(iter) + ": " + e.what());
    }

    std::vector<double> returns(n);
    double undiscounted = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      returns[k] = discounted_return(batch[k], config.gamma);
      undiscounted += undiscounted_return(batch[k]);
    }

    IterationRecord record;
    record.iteration = iter;
    record.effective_epsilon = eps;
    record.mean_return = undiscounted / static_cast<double>(n);
    double discounted_sum = 0.0;
    for (double r : returns) discounted_sum += r;
    record.mean_discounted_return = discounted_sum / static_cast<double>(n);

    TrajectorySet subset;
    if (config.cvar_subsampling) {
      record.threshold = percentile_threshold(returns, eps);
      for (std::size_t k : select_worst(returns, record.threshold)) subset.push_back(&batch[k]);
    } else {
      record.threshold = *std::max_element(returns.begin(), returns.end());
      subset = as_set(batch);
    }
    record.subset_size = subset.size();

    LinearBaseline baseline;
    if (config.use_baseline) {
      if (hooks.on_baseline_fit) hooks.on_baseline_fit(subset);
      baseline = LinearBaseline::fit(subset, config.gamma, horizon, config.baseline_ridge);
    }
    const AdvantageSet adv =
        advantages(subset, baseline, config.gamma, config.polopt.normalize_advantages);
    StepResult step;
    try {
      step = batch_pol_opt(policy, subset, adv, config.polopt);
    } catch (const Error& e) {
      throw Error("epopt iteration " + std::to_string(iter) + ": " + e.what());
    }
    record.kl = step.kl;
    record.stepped = step.stepped;
    result.policy = std::move(step.policy);
    record.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.records.push_back(record);
    if (hooks.on_iteration) hooks.on_iteration(record, result.policy);
  }
  return result;
}

void write_iteration_csv_header(std::ostream& out) { out << kIterationCsvHeader << '\n'; }

void write_iteration_csv_row(std::ostream& out, const IterationRecord& r) {
  out << r.iteration << ',' << format_double(r.effective_epsilon) << ','
      << format_double(r.mean_return) << ',' << format_double(r.mean_discounted_return) << ','
      << format_double(r.threshold) << ',' << r.subset_size << ',' << format_double(r.kl) << ','
      << (r.stepped ? 1 : 0) << '\n';
}

}  // namespace epopt
