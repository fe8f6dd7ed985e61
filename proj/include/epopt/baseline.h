#pragma once

#include <cstddef>
#include <vector>

#include "epopt/mdp.h"

namespace epopt {

// Non-owning view of a trajectory batch (e.g. the worst-epsilon subset).
using TrajectorySet = std::vector<const Trajectory*>;
TrajectorySet as_set(const std::vector<Trajectory>& trajectories);

// [s, s*s, u, u^2, u^3, 1] with u = t / horizon; length 2 * dim(s) + 4.
Vector baseline_features(const Vector& obs, std::size_t t, std::size_t horizon);

// Linear value baseline over time-varying features, fit by ridge regression
// onto discounted returns-to-go. Operates on policy observations.
class LinearBaseline {
 public:
  static constexpr double kDefaultRidge = 1e-5;

  LinearBaseline() = default;
  LinearBaseline(Vector weights, std::size_t horizon);

  static LinearBaseline fit(const TrajectorySet& trajectories, double gamma, std::size_t horizon,
                            double ridge = kDefaultRidge);

  bool fitted() const { return weights_.size() > 0; }
  const Vector& weights() const { return weights_; }
  std::size_t horizon() const { return horizon_; }

  // 0 for an unfit baseline.
  double predict(const Vector& obs, std::size_t t) const;

 private:
  Vector weights_;
  std::size_t horizon_ = 0;
};

}  // namespace epopt
