#include "epopt/baseline.h"

#include "epopt/error.h"

namespace epopt {

TrajectorySet as_set(const std::vector<Trajectory>& trajectories) {
  TrajectorySet set;
  set.reserve(trajectories.size());
  for (const auto& tau : trajectories) set.push_back(&tau);
  return set;
}

Vector baseline_features(const Vector& obs, std::size_t t, std::size_t horizon) {
  const Eigen::Index d = obs.size();
  const double u = horizon > 0 ? static_cast<double>(t) / static_cast<double>(horizon) : 0.0;
  Vector f(2 * d + 4);
  f.head(d) = obs;
  f.segment(d, d) = obs.array().square();
  f[2 * d] = u;
  f[2 * d + 1] = u * u;
  f[2 * d + 2] = u * u * u;
  f[2 * d + 3] = 1.0;
  return f;
}

LinearBaseline::LinearBaseline(Vector weights, std::size_t horizon)
    : weights_(std::move(weights)), horizon_(horizon) {}

LinearBaseline LinearBaseline::fit(const TrajectorySet& trajectories, double gamma,
                                   std::size_t horizon, double ridge) {
  Eigen::Index dim = -1;
  Matrix gram;
  Vector rhs;
  std::size_t count = 0;
  for (const Trajectory* tau : trajectories) {
    const auto targets = returns_to_go(*tau, gamma);
    for (std::size_t t = 0; t < tau->length(); ++t) {
      const Vector f = baseline_features(tau->observations[t], t, horizon);
      if (dim < 0) {
        dim = f.size();
        gram = Matrix::Zero(dim, dim);
        rhs = Vector::Zero(dim);
      } else if (f.size() != dim) {
        throw DimensionMismatch("baseline fit: inconsistent observation dimensions");
      }
      gram.selfadjointView<Eigen::Lower>().rankUpdate(f);
      rhs += targets[t] * f;
      ++count;
    }
  }
  if (count == 0) throw Error("baseline fit: no transitions");
  Matrix full = gram.selfadjointView<Eigen::Lower>();
  full.diagonal().array() += ridge;
  Vector w = full.ldlt().solve(rhs);
  return LinearBaseline(std::move(w), horizon);
}

double LinearBaseline::predict(const Vector& obs, std::size_t t) const {
  if (!fitted()) return 0.0;
  const Vector f = baseline_features(obs, t, horizon_);
  if (f.size() != weights_.size()) throw DimensionMismatch("baseline predict: feature length");
  return weights_.dot(f);
}

}  // namespace epopt
