#include "epopt/polopt.h"

#include <algorithm>
#include <cmath>

#include "epopt/error.h"

namespace epopt {

std::string to_string(PolOptMethod method) {
  return method == PolOptMethod::natural ? "natural" : "reinforce";
}

PolOptMethod parse_polopt_method(const std::string& name) {
  if (name == "natural") return PolOptMethod::natural;
  if (name == "reinforce") return PolOptMethod::reinforce;
  throw ConfigError("unknown polopt method '" + name + "' (expected reinforce | natural)");
}

void PolOptConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("polopt.learning_rate must be > 0");
  if (!(kl_step > 0.0)) throw ConfigError("polopt.kl_step must be > 0");
  if (cg_iters < 1) throw ConfigError("polopt.cg_iters must be >= 1");
  if (cg_damping < 0.0) throw ConfigError("polopt.cg_damping must be >= 0");
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0)) {
    throw ConfigError("polopt.backtrack_ratio must lie in (0, 1)");
  }
  if (max_backtracks < 1) throw ConfigError("polopt.max_backtracks must be >= 1");
  if (!(fisher_subsample > 0.0 && fisher_subsample <= 1.0)) {
    throw ConfigError("polopt.fisher_subsample must lie in (0, 1]");
  }
}

AdvantageSet advantages(const TrajectorySet& trajectories, const LinearBaseline& baseline,
                        double gamma, bool normalize) {
  AdvantageSet adv;
  adv.reserve(trajectories.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (const Trajectory* tau : trajectories) {
    auto a = returns_to_go(*tau, gamma);
    for (std::size_t t = 0; t < a.size(); ++t) {
      a[t] -= baseline.predict(tau->observations[t], t);
      sum += a[t];
    }
    count += a.size();
    adv.push_back(std::move(a));
  }
  if (!normalize || count == 0) return adv;
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const auto& a : adv) {
    for (double v : a) sq += (v - mean) * (v - mean);
  }
  const double std_dev = std::sqrt(sq / static_cast<double>(count));
  if (!(std_dev > 0.0)) return adv;
  for (auto& a : adv) {
    for (double& v : a) v = (v - mean) / std_dev;
  }
  return adv;
}

StepBatch stack_steps(const TrajectorySet& trajectories, const AdvantageSet& adv) {
  if (adv.size() != trajectories.size()) {
    throw DimensionMismatch("advantages do not match the trajectory batch");
  }
  std::size_t total = 0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    if (adv[k].size() != trajectories[k]->length()) {
      throw DimensionMismatch("advantage length does not match trajectory length");
    }
    total += adv[k].size();
  }
  StepBatch batch;
  if (total == 0) return batch;
  const Eigen::Index obs_dim = trajectories.front()->observations.front().size();
  const Eigen::Index act_dim = trajectories.front()->actions.front().size();
  batch.obs.resize(obs_dim, static_cast<Eigen::Index>(total));
  batch.actions.resize(act_dim, static_cast<Eigen::Index>(total));
  batch.advantages.resize(static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const Trajectory& tau = *trajectories[k];
    for (std::size_t t = 0; t < tau.length(); ++t, ++col) {
      batch.obs.col(col) = tau.observations[t];
      batch.actions.col(col) = tau.actions[t];
      batch.advantages[col] = adv[k][t];
    }
  }
  return batch;
}

Vector reinforce_gradient(const TrajectorySet& trajectories, const AdvantageSet& adv,
                          const GaussianMlpPolicy& policy) {
  const StepBatch batch = stack_steps(trajectories, adv);
  if (batch.advantages.size() == 0) return Vector::Zero(policy.num_params());
  const double steps = static_cast<double>(batch.advantages.size());
  return policy.weighted_score(batch.obs, batch.actions, batch.advantages / steps);
}

Vector conjugate_gradient(const FisherOperator& op, const Vector& b, int iters, bool* breakdown) {
  if (breakdown) *breakdown = false;
  Vector x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = b;
  double rr = r.squaredNorm();
  for (int i = 0; i < iters && rr > 1e-20; ++i) {
    const Vector ap = op.apply(p);
    const double curvature = p.dot(ap);
    if (!(curvature > 0.0) || !std::isfinite(curvature)) {
      if (breakdown) *breakdown = true;
      return x;
    }
    const double alpha = rr / curvature;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return x;
}

namespace {

Matrix strided_columns(const Matrix& m, double fraction) {
  const auto stride = static_cast<Eigen::Index>(std::max(1.0, std::round(1.0 / fraction)));
  if (stride == 1) return m;
  const Eigen::Index cols = (m.cols() + stride - 1) / stride;
  Matrix out(m.rows(), cols);
  for (Eigen::Index j = 0; j < cols; ++j) out.col(j) = m.col(j * stride);
  return out;
}

double surrogate(const Vector& new_log_probs, const Vector& old_log_probs, const Vector& adv) {
  return ((new_log_probs - old_log_probs).array().exp() * adv.array()).mean();
}

}  // namespace

StepResult natural_step(const GaussianMlpPolicy& policy, const TrajectorySet& trajectories,
                        const AdvantageSet& adv, const Vector& gradient,
                        const PolOptConfig& config) {
  StepResult result{policy};
  if (!gradient.allFinite()) throw Error("natural_step: non-finite gradient");
  const StepBatch batch = stack_steps(trajectories, adv);
  if (batch.advantages.size() == 0 || gradient.squaredNorm() == 0.0) return result;

  const Matrix fisher_obs = strided_columns(batch.obs, config.fisher_subsample);
  const FisherOperator fisher(policy, fisher_obs, config.cg_damping);
  bool breakdown = false;
  Vector direction = conjugate_gradient(fisher, gradient, config.cg_iters, &breakdown);
  double shs = breakdown ? 0.0 : direction.dot(fisher.apply(direction));
  if (breakdown || !(shs > 0.0) || !std::isfinite(shs)) {
    result.cg_fallback = true;
    direction = gradient;
    shs = direction.dot(fisher.apply(direction));
    if (!(shs > 0.0) || !std::isfinite(shs)) shs = direction.squaredNorm();
  }
  const Vector full_step = std::sqrt(2.0 * config.kl_step / shs) * direction;

  const GaussianBatch old_dist = policy.distribution(batch.obs);
  const Vector old_log_probs = policy.log_prob_batch(batch.obs, batch.actions);
  const double old_surrogate = batch.advantages.mean();
  const Vector theta = policy.flat();
  double fraction = 1.0;
  for (int k = 0; k < config.max_backtracks; ++k, fraction *= config.backtrack_ratio) {
    GaussianMlpPolicy candidate = policy;
    candidate.set_flat(theta + fraction * full_step);
    candidate.clamp_log_std();
    const double kl = kl_mean(old_dist, candidate, batch.obs);
    const double improvement =
        surrogate(candidate.log_prob_batch(batch.obs, batch.actions), old_log_probs,
                  batch.advantages) - old_surrogate;
    if (std::isfinite(kl) && kl <= config.kl_step && improvement >= 0.0) {
      result.policy = std::move(candidate);
      result.kl = kl;
      result.stepped = true;
      result.backtracks = k;
      return result;
    }
  }
  result.backtracks = config.max_backtracks;
  return result;
}

StepResult reinforce_step(const GaussianMlpPolicy& policy, const TrajectorySet& trajectories,
                          const Vector& gradient, const PolOptConfig& config) {
  StepResult result{policy};
  if (!gradient.allFinite()) throw Error("reinforce_step: non-finite gradient");
  if (trajectories.empty() || gradient.squaredNorm() == 0.0) return result;
  result.policy.set_flat(policy.flat() + config.learning_rate * gradient);
  result.policy.clamp_log_std();
  result.stepped = true;
  AdvantageSet zeros;
  for (const Trajectory* tau : trajectories) zeros.emplace_back(tau->length(), 0.0);
  const StepBatch batch = stack_steps(trajectories, zeros);
  if (batch.obs.cols() > 0) {
    result.kl = kl_mean(policy.distribution(batch.obs), result.policy, batch.obs);
  }
  return result;
}

StepResult batch_pol_opt(const GaussianMlpPolicy& policy, const TrajectorySet& trajectories,
                         const AdvantageSet& adv, const PolOptConfig& config) {
  const Vector gradient = reinforce_gradient(trajectories, adv, policy);
  if (config.method == PolOptMethod::natural) {
    return natural_step(policy, trajectories, adv, gradient, config);
  }
  return reinforce_step(policy, trajectories, gradient, config);
}

}  // namespace epopt
