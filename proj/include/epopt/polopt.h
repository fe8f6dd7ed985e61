#pragma once

#include <string>
#include <vector>

#include "epopt/baseline.h"
#include "epopt/mdp.h"
#include "epopt/policy.h"

namespace epopt {

enum class PolOptMethod { reinforce, natural };

std::string to_string(PolOptMethod method);
PolOptMethod parse_polopt_method(const std::string& name);

struct PolOptConfig {
  PolOptMethod method = PolOptMethod::natural;
  double learning_rate = 0.01;  // reinforce
  double kl_step = 0.01;        // natural: trust-region radius delta
  int cg_iters = 10;
  double cg_damping = 1e-5;
  double backtrack_ratio = 0.5;
  int max_backtracks = 10;
  // Fraction of batch states the Fisher operator is built on (every k-th
  // state, k = round(1 / fraction)). KL and surrogate checks use all states.
  double fisher_subsample = 1.0;
  // Standardize advantages over the batch. Disabled together with the
  // baseline in the no-baseline ablation.
  bool normalize_advantages = true;

  void validate() const;
};

// advantages[k][t] for trajectory k of the batch, step t.
using AdvantageSet = std::vector<std::vector<double>>;

// A_t = return-to-go(t) - baseline(s_t, t), optionally standardized across
// every step of the batch (skipped when the batch variance is zero).
AdvantageSet advantages(const TrajectorySet& trajectories, const LinearBaseline& baseline,
                        double gamma, bool normalize = true);

// (1 / sum_k T_k) * sum_k sum_t grad log pi(a_t | s_t) * A_t.
Vector reinforce_gradient(const TrajectorySet& trajectories, const AdvantageSet& adv,
                          const GaussianMlpPolicy& policy);

// Column-stacked steps of a trajectory batch.
struct StepBatch {
  Matrix obs;
  Matrix actions;
  Vector advantages;
};
StepBatch stack_steps(const TrajectorySet& trajectories, const AdvantageSet& adv);

struct StepResult {
  GaussianMlpPolicy policy;
  double kl = 0.0;           // kl_mean(old, new) over the batch states
  bool stepped = false;      // false: policy returned unchanged
  bool cg_fallback = false;  // conjugate gradients broke down
  int backtracks = 0;
};

// Solves A x = b by conjugate gradients. Sets *breakdown when a search
// direction has non-positive curvature.
Vector conjugate_gradient(const FisherOperator& op, const Vector& b, int iters, bool* breakdown);

// Natural-gradient step scaled to the KL trust region, with halving
// backtracking until kl_mean <= delta and the importance-ratio surrogate has
// not decreased.
StepResult natural_step(const GaussianMlpPolicy& policy, const TrajectorySet& trajectories,
                        const AdvantageSet& adv, const Vector& gradient,
                        const PolOptConfig& config);

StepResult reinforce_step(const GaussianMlpPolicy& policy, const TrajectorySet& trajectories,
                          const Vector& gradient, const PolOptConfig& config);

// One BatchPolOpt call: gradient on the batch, then the configured update.
StepResult batch_pol_opt(const GaussianMlpPolicy& policy, const TrajectorySet& trajectories,
                         const AdvantageSet& adv, const PolOptConfig& config);

}  // namespace epopt
