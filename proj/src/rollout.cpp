#include "epopt/rollout.h"

#include "epopt/error.h"

namespace epopt {

Trajectory rollout(const Environment& env, const ModelParams& p, const GaussianMlpPolicy& policy,
                   std::size_t horizon, Rng& rng, const RolloutOptions& options) {
  env.check_params(p);
  const EnvSpec& spec = env.spec();
  if (policy.obs_dim() != spec.obs_dim || policy.action_dim() != spec.action_dim) {
    throw DimensionMismatch("policy shape does not match env '" + spec.name + "'");
  }
  Trajectory tau;
  tau.model = p;
  tau.states.reserve(horizon);
  tau.observations.reserve(horizon);
  tau.actions.reserve(horizon);
  tau.rewards.reserve(horizon);
  tau.log_probs.reserve(horizon);
  tau.next_states.reserve(horizon);
  if (horizon == 0) return tau;

  Vector state = env.reset(p, rng);
  for (std::size_t t = 0; t < horizon; ++t) {
    if (!state.allFinite()) throw NumericalBlowup("non-finite state", t);
    Vector obs = env.observe(state);
    GaussianMlpPolicy::Sample sample;
    try {
      if (options.deterministic) {
        sample.action = policy.mean(obs);
        sample.log_prob = policy.log_prob(obs, sample.action);
      } else {
        sample = policy.act(obs, rng);
      }
    } catch (const NumericalBlowup&) {
      throw;
    } catch (const Error& e) {
      throw NumericalBlowup(e.what(), t);
    }
    if (!sample.action.allFinite()) throw NumericalBlowup("non-finite action", t);
    StepOutcome out;
    try {
      out = env.step(state, sample.action, p);
    } catch (const NumericalBlowup& e) {
      throw NumericalBlowup("env '" + spec.name + "' diverged", t);
    }
    tau.states.push_back(state);
    tau.observations.push_back(std::move(obs));
    tau.actions.push_back(std::move(sample.action));
    tau.rewards.push_back(out.reward);
    tau.log_probs.push_back(sample.log_prob);
    tau.next_states.push_back(out.next_state);
    state = std::move(out.next_state);
    if (out.terminated) {
      tau.terminated = true;
      break;
    }
  }
  return tau;
}

}  // namespace epopt
