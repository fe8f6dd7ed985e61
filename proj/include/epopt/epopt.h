#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "epopt/baseline.h"
#include "epopt/mdp.h"
#include "epopt/policy.h"
#include "epopt/polopt.h"

namespace epopt {

struct EpoptConfig {
  int niter = 100;
  int n = 240;           // models (= trajectories) per iteration
  double epsilon = 1.0;  // CVaR level
  // Iterations run at epsilon = 1 before switching; negative means niter / 2.
  int warmup_iters = -1;
  double gamma = 0.99;
  std::size_t horizon = 0;  // 0: env default
  std::uint64_t seed = 0;
  PolOptConfig polopt;
  std::vector<std::size_t> hidden = {64, 64};
  bool use_baseline = true;
  double baseline_ridge = LinearBaseline::kDefaultRidge;
  // false skips the percentile and subset selection entirely (the batch is
  // used as is). Only meaningful with epsilon = 1.
  bool cvar_subsampling = true;
  std::size_t workers = 1;  // 0: hardware concurrency
  // First iteration index to run. Resuming at k from the policy a run had
  // after k iterations reproduces the uninterrupted run exactly.
  int start_iteration = 0;

  int resolved_warmup() const { return warmup_iters < 0 ? niter / 2 : warmup_iters; }
  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double effective_epsilon = 1.0;
  double mean_return = 0.0;             // undiscounted, all N trajectories
  double mean_discounted_return = 0.0;  // R(tau), all N trajectories
  double threshold = 0.0;               // Q_epsilon over discounted returns
  std::size_t subset_size = 0;
  double kl = 0.0;
  bool stepped = false;
  double wall_clock_seconds = 0.0;  // not written to CSV (non-deterministic)
};

// k-th smallest return with k = ceil(epsilon * N). Throws on empty input.
double percentile_threshold(std::span<const double> returns, double epsilon);

// Indices (ascending) of every return <= threshold.
std::vector<std::size_t> select_worst(std::span<const double> returns, double threshold);

double effective_epsilon(const EpoptConfig& config, int iteration);

struct TrainHooks {
  std::function<void(const IterationRecord&, const GaussianMlpPolicy&)> on_iteration;
  // Called with the trajectories the baseline is fit on.
  std::function<void(const TrajectorySet&)> on_baseline_fit;
};

struct TrainResult {
  GaussianMlpPolicy policy;
  std::vector<IterationRecord> records;
};

// EPOpt-epsilon: per iteration, sample N models, roll out one trajectory on
// each, keep the worst epsilon fraction by discounted return, refit the
// baseline on that subset and take one BatchPolOpt step on it.
// Starts from `initial` when given, otherwise from a seeded random init.
TrainResult epopt_train(const Environment& env, const SourceDistribution& source,
                        const EpoptConfig& config,
                        const std::optional<GaussianMlpPolicy>& initial = std::nullopt,
                        const TrainHooks& hooks = {});

GaussianMlpPolicy initial_policy(const Environment& env, const EpoptConfig& config);

inline constexpr const char* kIterationCsvHeader =
    "iteration,effective_epsilon,mean_return,mean_discounted_return,threshold,subset_size,kl,"
    "stepped";
void write_iteration_csv_header(std::ostream& out);
void write_iteration_csv_row(std::ostream& out, const IterationRecord& record);

}  // namespace epopt
