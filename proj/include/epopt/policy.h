#pragma once

#include <cstddef>
#include <vector>

#include "epopt/mdp.h"
#include "epopt/random.h"

namespace epopt {

// Per-state diagonal Gaussians: column j of `means` is the mean at state j.
struct GaussianBatch {
  Matrix means;
  Vector log_std;
};

// Activations of one batched forward pass, kept for backprop and
// forward-mode products. inputs[l] is the input to layer l.
struct ForwardCache {
  std::vector<Matrix> inputs;
  Matrix output;
};

// pi_theta(a|s) = N(mlp(s), diag(exp(2 log_std))). The mean network is a
// tanh MLP with a linear output layer; log_std is state independent.
//
// Flat parameter layout, used by every gradient in the library: for each
// layer in order, the weight matrix in column-major order followed by its
// bias, then log_std.
class GaussianMlpPolicy {
 public:
  static constexpr double kLogStdFloor = -10.0;

  GaussianMlpPolicy() = default;
  // Zero weights, log_std = 0.
  GaussianMlpPolicy(std::size_t obs_dim, std::size_t action_dim,
                    std::vector<std::size_t> hidden = {64, 64});
  // Orthogonal init; output layer scaled by 0.01 so initial means are small.
  static GaussianMlpPolicy initialized(std::size_t obs_dim, std::size_t action_dim,
                                       std::vector<std::size_t> hidden, Rng& rng);

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  std::size_t num_params() const;
  std::size_t num_mean_params() const { return num_params() - action_dim_; }

  Vector flat() const;
  void set_flat(const Vector& theta);
  const Vector& log_std() const { return log_std_; }
  void set_log_std(const Vector& log_std);
  // Applied after optimizer updates; explicit set_log_std is not clamped.
  void clamp_log_std(double floor = kLogStdFloor);

  Vector mean(const Vector& obs) const;
  Matrix mean_batch(const Matrix& obs) const;
  GaussianBatch distribution(const Matrix& obs) const;

  struct Sample {
    Vector action;
    double log_prob = 0.0;
  };
  Sample act(const Vector& obs, Rng& rng) const;

  double log_prob(const Vector& obs, const Vector& action) const;
  Vector log_prob_batch(const Matrix& obs, const Matrix& actions) const;
  Vector log_prob_grad(const Vector& obs, const Vector& action) const;
  // sum_j weights[j] * grad log pi(actions[:, j] | obs[:, j]).
  Vector weighted_score(const Matrix& obs, const Matrix& actions, const Vector& weights) const;

  ForwardCache forward(const Matrix& obs) const;
  // Vector-Jacobian product of the mean network: grad_out is action_dim x S.
  // Returns a full-length flat vector with zero log_std entries.
  Vector backward(const ForwardCache& cache, const Matrix& grad_out) const;
  // Jacobian-vector product of the mean network along flat direction v.
  Matrix jvp(const ForwardCache& cache, const Vector& v) const;

  bool operator==(const GaussianMlpPolicy& other) const;

  Json to_json() const;
  static GaussianMlpPolicy from_json(const Json& j);

 private:
  void check_obs(const Matrix& obs) const;

  std::size_t obs_dim_ = 0;
  std::size_t action_dim_ = 0;
  std::vector<std::size_t> hidden_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Vector log_std_;
};

// Mean over states of KL(ref || policy) between diagonal Gaussians.
double kl_mean(const GaussianBatch& ref, const GaussianMlpPolicy& policy, const Matrix& obs);
Vector kl_mean_grad(const GaussianBatch& ref, const GaussianMlpPolicy& policy, const Matrix& obs);

// Average Fisher information of the policy over a fixed state batch, applied
// as a linear operator. Equals the Hessian of kl_mean at ref == policy.
class FisherOperator {
 public:
  FisherOperator(const GaussianMlpPolicy& policy, const Matrix& obs, double damping = 0.0);
  Vector apply(const Vector& v) const;
  std::size_t dim() const { return policy_.num_params(); }

 private:
  const GaussianMlpPolicy& policy_;
  ForwardCache cache_;
  Vector inv_var_;
  double damping_;
  std::size_t num_states_;
};

}  // namespace epopt
