#pragma once

#include <cstddef>

#include "epopt/mdp.h"
#include "epopt/policy.h"
#include "epopt/random.h"

namespace epopt {

struct RolloutOptions {
  // Act with the policy mean instead of sampling. Log-probs are still those
  // of the executed action under the policy.
  bool deterministic = false;
};

// Samples one trajectory of at most `horizon` steps on M(p). The same rng is
// used for the initial state and the action noise, so (seed, policy, p)
// fully determine the result. Throws NumericalBlowup naming the step index.
Trajectory rollout(const Environment& env, const ModelParams& p, const GaussianMlpPolicy& policy,
                   std::size_t horizon, Rng& rng, const RolloutOptions& options = {});

}  // namespace epopt
