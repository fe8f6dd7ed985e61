#include "epopt/policy.h"

#include <cmath>
#include <numbers>

#include "epopt/error.h"

namespace epopt {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Matrix orthogonal(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  const std::size_t big = std::max(rows, cols);
  const std::size_t small = std::min(rows, cols);
  Matrix g(big, small);
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = standard_normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(big, small);
  // Sign fix makes the factorization unique.
  const Matrix r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (std::size_t j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Matrix w = rows >= cols ? q : Matrix(q.transpose());
  return gain * w;
}

}  // namespace

GaussianMlpPolicy::GaussianMlpPolicy(std::size_t obs_dim, std::size_t action_dim,
                                     std::vector<std::size_t> hidden)
    : obs_dim_(obs_dim), action_dim_(action_dim), hidden_(std::move(hidden)) {
  if (obs_dim_ == 0 || action_dim_ == 0) {
    throw DimensionMismatch("policy dimensions must be >= 1");
  }
  std::size_t in = obs_dim_;
  for (std::size_t width : hidden_) {
    if (width == 0) throw DimensionMismatch("hidden layer width must be >= 1");
    weights_.push_back(Matrix::Zero(width, in));
    biases_.push_back(Vector::Zero(width));
    in = width;
  }
  weights_.push_back(Matrix::Zero(action_dim_, in));
  biases_.push_back(Vector::Zero(action_dim_));
  log_std_ = Vector::Zero(action_dim_);
}

GaussianMlpPolicy GaussianMlpPolicy::initialized(std::size_t obs_dim, std::size_t action_dim,
                                                 std::vector<std::size_t> hidden, Rng& rng) {
  GaussianMlpPolicy policy(obs_dim, action_dim, std::move(hidden));
  for (std::size_t l = 0; l < policy.weights_.size(); ++l) {
    auto& w = policy.weights_[l];
    const bool output_layer = l + 1 == policy.weights_.size();
    w = orthogonal(w.rows(), w.cols(), output_layer ? 0.01 : 1.0, rng);
  }
  return policy;
}

std::size_t GaussianMlpPolicy::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n + log_std_.size();
}

Vector GaussianMlpPolicy::flat() const {
  Vector theta(num_params());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    theta.segment(offset, w.size()) = Eigen::Map<const Vector>(w.data(), w.size());
    offset += w.size();
    theta.segment(offset, biases_[l].size()) = biases_[l];
    offset += biases_[l].size();
  }
  theta.tail(log_std_.size()) = log_std_;
  return theta;
}

void GaussianMlpPolicy::set_flat(const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != num_params()) {
    throw DimensionMismatch("set_flat: expected " + std::to_string(num_params()) +
                            " parameters, got " + std::to_string(theta.size()));
  }
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto& w = weights_[l];
    Eigen::Map<Vector>(w.data(), w.size()) = theta.segment(offset, w.size());
    offset += w.size();
    biases_[l] = theta.segment(offset, biases_[l].size());
    offset += biases_[l].size();
  }
  log_std_ = theta.tail(log_std_.size());
}

void GaussianMlpPolicy::set_log_std(const Vector& log_std) {
  if (static_cast<std::size_t>(log_std.size()) != action_dim_) {
    throw DimensionMismatch("set_log_std: wrong length");
  }
  log_std_ = log_std;
}

void GaussianMlpPolicy::clamp_log_std(double floor) { log_std_ = log_std_.cwiseMax(floor); }

void GaussianMlpPolicy::check_obs(const Matrix& obs) const {
  if (static_cast<std::size_t>(obs.rows()) != obs_dim_) {
    throw DimensionMismatch("policy expects observations of dimension " +
                            std::to_string(obs_dim_) + ", got " + std::to_string(obs.rows()));
  }
}

ForwardCache GaussianMlpPolicy::forward(const Matrix& obs) const {
  check_obs(obs);
  ForwardCache cache;
  cache.inputs.reserve(weights_.size());
  cache.inputs.push_back(obs);
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    Matrix z = weights_[l] * cache.inputs.back();
    z.colwise() += biases_[l];
    cache.inputs.push_back(z.array().tanh().matrix());
  }
  cache.output = weights_.back() * cache.inputs.back();
  cache.output.colwise() += biases_.back();
  return cache;
}

Vector GaussianMlpPolicy::backward(const ForwardCache& cache, const Matrix& grad_out) const {
  Vector grad = Vector::Zero(num_params());
  std::vector<Eigen::Index> offsets(weights_.size());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offsets[l] = offset;
    offset += weights_[l].size() + biases_[l].size();
  }
  Matrix delta = grad_out;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const auto& w = weights_[l];
    Matrix dw = delta * cache.inputs[l].transpose();
    grad.segment(offsets[l], w.size()) = Eigen::Map<const Vector>(dw.data(), dw.size());
    grad.segment(offsets[l] + w.size(), biases_[l].size()) = delta.rowwise().sum();
    if (l > 0) {
      const auto& a = cache.inputs[l];
      delta = ((w.transpose() * delta).array() * (1.0 - a.array().square())).matrix();
    }
  }
  return grad;
}

Matrix GaussianMlpPolicy::jvp(const ForwardCache& cache, const Vector& v) const {
  if (static_cast<std::size_t>(v.size()) != num_params()) {
    throw DimensionMismatch("jvp: direction has wrong length");
  }
  const Eigen::Index batch = cache.inputs.front().cols();
  Matrix da;  // tangent of inputs[l]; the observations have none
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const auto& w = weights_[l];
    Eigen::Map<const Matrix> dw(v.data() + offset, w.rows(), w.cols());
    offset += w.size();
    const Vector db = v.segment(offset, biases_[l].size());
    offset += biases_[l].size();
    Matrix dz = dw * cache.inputs[l];
    if (l > 0) dz.noalias() += w * da;
    dz.colwise() += db;
    if (l + 1 == weights_.size()) return dz;
    const auto& a = cache.inputs[l + 1];
    da = (dz.array() * (1.0 - a.array().square())).matrix();
  }
  return Matrix::Zero(action_dim_, batch);
}

Vector GaussianMlpPolicy::mean(const Vector& obs) const { return mean_batch(obs); }

Matrix GaussianMlpPolicy::mean_batch(const Matrix& obs) const { return forward(obs).output; }

GaussianBatch GaussianMlpPolicy::distribution(const Matrix& obs) const {
  return {mean_batch(obs), log_std_};
}

GaussianMlpPolicy::Sample GaussianMlpPolicy::act(const Vector& obs, Rng& rng) const {
  const Vector mu = mean(obs);
  if (!mu.allFinite()) throw Error("policy produced a non-finite mean");
  Sample out;
  out.action.resize(action_dim_);
  out.log_prob = 0.0;
  for (std::size_t i = 0; i < action_dim_; ++i) {
    const double z = standard_normal(rng);
    out.action[i] = mu[i] + std::exp(log_std_[i]) * z;
    out.log_prob += -0.5 * z * z - log_std_[i] - kHalfLog2Pi;
  }
  return out;
}

double GaussianMlpPolicy::log_prob(const Vector& obs, const Vector& action) const {
  return log_prob_batch(obs, action)[0];
}

Vector GaussianMlpPolicy::log_prob_batch(const Matrix& obs, const Matrix& actions) const {
  const Matrix mu = mean_batch(obs);
  if (actions.rows() != mu.rows() || actions.cols() != mu.cols()) {
    throw DimensionMismatch("log_prob: action batch shape mismatch");
  }
  const Vector inv_std = (-log_std_).array().exp();
  const Matrix z = (inv_std.asDiagonal() * (actions - mu));
  Vector out = -0.5 * z.colwise().squaredNorm().transpose();
  out.array() -= log_std_.sum() + static_cast<double>(action_dim_) * kHalfLog2Pi;
  return out;
}

Vector GaussianMlpPolicy::log_prob_grad(const Vector& obs, const Vector& action) const {
  return weighted_score(obs, action, Vector::Ones(1));
}

Vector GaussianMlpPolicy::weighted_score(const Matrix& obs, const Matrix& actions,
                                         const Vector& weights) const {
  const ForwardCache cache = forward(obs);
  if (actions.rows() != cache.output.rows() || actions.cols() != cache.output.cols() ||
      weights.size() != actions.cols()) {
    throw DimensionMismatch("weighted_score: batch shape mismatch");
  }
  const Vector inv_var = (-2.0 * log_std_).array().exp();
  const Matrix diff = actions - cache.output;
  // d log pi / d mean = (a - mu) / sigma^2, weighted per sample.
  const Matrix grad_out = inv_var.asDiagonal() * diff * weights.asDiagonal();
  Vector grad = backward(cache, grad_out);
  // d log pi / d log_std = (a - mu)^2 / sigma^2 - 1.
  const Matrix scaled_sq = inv_var.asDiagonal() * diff.array().square().matrix();
  grad.tail(action_dim_) = scaled_sq * weights - Vector::Constant(action_dim_, weights.sum());
  return grad;
}

bool GaussianMlpPolicy::operator==(const GaussianMlpPolicy& other) const {
  return obs_dim_ == other.obs_dim_ && action_dim_ == other.action_dim_ &&
         hidden_ == other.hidden_ && flat() == other.flat();
}

Json GaussianMlpPolicy::to_json() const {
  Json j;
  j["format"] = "epopt-gaussian-mlp";
  j["version"] = 1;
  j["obs_dim"] = obs_dim_;
  j["action_dim"] = action_dim_;
  j["hidden"] = hidden_;
  j["activation"] = "tanh";
  j["num_params"] = num_params();
  const Vector theta = flat();
  j["params"] = std::vector<double>(theta.data(), theta.data() + theta.size());
  return j;
}

GaussianMlpPolicy GaussianMlpPolicy::from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "epopt-gaussian-mlp") {
      throw ConfigError("checkpoint: unrecognized format");
    }
    GaussianMlpPolicy policy(j.at("obs_dim").get<std::size_t>(),
                             j.at("action_dim").get<std::size_t>(),
                             j.at("hidden").get<std::vector<std::size_t>>());
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != policy.num_params() ||
        j.at("num_params").get<std::size_t>() != policy.num_params()) {
      throw ConfigError("checkpoint: parameter count does not match layer shapes");
    }
    policy.set_flat(Eigen::Map<const Vector>(params.data(), params.size()));
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
}

double kl_mean(const GaussianBatch& ref, const GaussianMlpPolicy& policy, const Matrix& obs) {
  const Matrix mu = policy.mean_batch(obs);
  if (mu.cols() == 0) return 0.0;
  const Vector& ls = policy.log_std();
  const Vector inv_var = (-2.0 * ls).array().exp();
  const Vector ref_var = (2.0 * ref.log_std).array().exp();
  const Matrix diff_sq = (ref.means - mu).array().square();
  // Per state: sum_i ls_i - ref_ls_i + (ref_var_i + d_i^2) / (2 var_i) - 1/2.
  const double constant = (ls - ref.log_std).sum() +
                          0.5 * ref_var.dot(inv_var) -
                          0.5 * static_cast<double>(ls.size());
  const double quad = 0.5 * (inv_var.asDiagonal() * diff_sq).sum() / static_cast<double>(mu.cols());
  return constant + quad;
}

Vector kl_mean_grad(const GaussianBatch& ref, const GaussianMlpPolicy& policy, const Matrix& obs) {
  const ForwardCache cache = policy.forward(obs);
  const double s = static_cast<double>(std::max<Eigen::Index>(1, obs.cols()));
  const Vector& ls = policy.log_std();
  const Vector inv_var = (-2.0 * ls).array().exp();
  const Matrix diff = cache.output - ref.means;
  Vector grad = policy.backward(cache, inv_var.asDiagonal() * diff / s);
  const Vector ref_var = (2.0 * ref.log_std).array().exp();
  const Vector mean_sq = diff.array().square().rowwise().sum() / s;
  grad.tail(ls.size()) = (1.0 - ((ref_var + mean_sq).array() * inv_var.array())).matrix();
  if (obs.cols() == 0) grad.setZero();
  return grad;
}

FisherOperator::FisherOperator(const GaussianMlpPolicy& policy, const Matrix& obs, double damping)
    : policy_(policy),
      cache_(policy.forward(obs)),
      inv_var_((-2.0 * policy.log_std()).array().exp()),
      damping_(damping),
      num_states_(static_cast<std::size_t>(obs.cols())) {}

Vector FisherOperator::apply(const Vector& v) const {
  Vector out;
  const std::size_t adim = policy_.action_dim();
  if (num_states_ == 0) {
    out = Vector::Zero(v.size());
  } else {
    const Matrix jv = policy_.jvp(cache_, v);
    out = policy_.backward(cache_, inv_var_.asDiagonal() * jv / static_cast<double>(num_states_));
  }
  out.tail(adim) = 2.0 * v.tail(adim);
  out += damping_ * v;
  return out;
}

}  // namespace epopt
