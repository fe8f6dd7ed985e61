#include "epopt/mdp.h"

#include <cmath>
#include <limits>
#include <numbers>

#include "epopt/error.h"

namespace epopt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double require_number(const Json& obj, const std::string& key,
                      const std::string& context) {
  if (!obj.contains(key)) {
    throw ConfigError("missing required field '" + context + "." + key + "'");
  }
  const auto& v = obj.at(key);
  if (!v.is_number()) {
    throw ConfigError("field '" + context + "." + key + "' must be a number");
  }
  return v.get<double>();
}

}  // namespace

ModelParams::ModelParams(std::vector<std::string> names, std::vector<double> values)
    : names_(std::move(names)), values_(std::move(values)) {
  if (names_.size() != values_.size()) {
    throw DimensionMismatch("ModelParams: " + std::to_string(names_.size()) + " names but " +
                            std::to_string(values_.size()) + " values");
  }
  if (names_.empty()) throw DimensionMismatch("ModelParams: empty parameter vector");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ConfigError("ModelParams: non-finite value for '" + names_[i] + "'");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (names_[i] == names_[j]) throw ConfigError("ModelParams: duplicate name '" + names_[i] + "'");
    }
  }
}

std::optional<std::size_t> ModelParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

double ModelParams::at(std::string_view name) const {
  if (auto i = index_of(name)) return values_[*i];
  throw UnknownParameter("unknown model parameter '" + std::string(name) + "'");
}

double ModelParams::get_or(std::string_view name, double fallback) const {
  if (auto i = index_of(name)) return values_[*i];
  return fallback;
}

ModelParams ModelParams::with(std::string_view name, double value) const {
  auto names = names_;
  auto values = values_;
  if (auto i = index_of(name)) {
    values[*i] = value;
  } else {
    names.emplace_back(name);
    values.push_back(value);
  }
  return ModelParams(std::move(names), std::move(values));
}

Json ModelParams::to_json() const {
  Json j = Json::object();
  for (std::size_t i = 0; i < names_.size(); ++i) j[names_[i]] = values_[i];
  return j;
}

ModelParams ModelParams::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("model parameters must be a JSON object");
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError("model parameter '" + key + "' must be a number");
    names.push_back(key);
    values.push_back(value.get<double>());
  }
  return ModelParams(std::move(names), std::move(values));
}

SourceDistribution::SourceDistribution(std::vector<TruncatedGaussian> dims)
    : dims_(std::move(dims)) {
  if (dims_.empty()) throw ConfigError("source distribution has no dimensions");
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    const std::string where = "source dimension '" + d.name + "'";
    if (!std::isfinite(d.mu) || !std::isfinite(d.sigma) || !std::isfinite(d.low) ||
        !std::isfinite(d.high)) {
      throw ConfigError(where + ": non-finite entry");
    }
    if (!(d.low < d.high)) throw ConfigError(where + ": requires low < high");
    if (d.sigma < 0.0) throw ConfigError(where + ": requires sigma >= 0");
    if (d.mu < d.low || d.mu > d.high) throw ConfigError(where + ": mu outside [low, high]");
    for (std::size_t j = 0; j < i; ++j) {
      if (dims_[j].name == d.name) throw ConfigError(where + ": duplicate name");
    }
  }
}

std::vector<std::string> SourceDistribution::names() const {
  std::vector<std::string> out;
  out.reserve(dims_.size());
  for (const auto& d : dims_) out.push_back(d.name);
  return out;
}

std::optional<std::size_t> SourceDistribution::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i].name == name) return i;
  }
  return std::nullopt;
}

const TruncatedGaussian& SourceDistribution::dim(std::string_view name) const {
  if (auto i = index_of(name)) return dims_[*i];
  throw UnknownParameter("source distribution has no parameter '" + std::string(name) + "'");
}

ModelParams SourceDistribution::mean() const {
  std::vector<double> values;
  for (const auto& d : dims_) values.push_back(d.mu);
  return ModelParams(names(), std::move(values));
}

SourceDistribution SourceDistribution::frozen(std::string_view name) const {
  auto dims = dims_;
  auto i = index_of(name);
  if (!i) throw UnknownParameter("source distribution has no parameter '" + std::string(name) + "'");
  dims[*i].sigma = 0.0;
  return SourceDistribution(std::move(dims));
}

SourceDistribution SourceDistribution::point_mass() const {
  auto dims = dims_;
  for (auto& d : dims) d.sigma = 0.0;
  return SourceDistribution(std::move(dims));
}

Json SourceDistribution::to_json() const {
  Json j = Json::object();
  for (const auto& d : dims_) {
    j[d.name] = {{"mu", d.mu}, {"sigma", d.sigma}, {"low", d.low}, {"high", d.high}};
  }
  return j;
}

SourceDistribution SourceDistribution::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("source distribution must be a JSON object");
  std::vector<TruncatedGaussian> dims;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object()) throw ConfigError("source." + key + " must be an object");
    const std::string ctx = "source." + key;
    dims.push_back({key, require_number(value, "mu", ctx), require_number(value, "sigma", ctx),
                    require_number(value, "low", ctx), require_number(value, "high", ctx)});
  }
  return SourceDistribution(std::move(dims));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

ModelParams sample_params(const SourceDistribution& dist, Rng& rng, std::size_t max_attempts) {
  std::vector<double> values;
  values.reserve(dist.size());
  for (const auto& d : dist.dims()) {
    if (d.frozen()) {
      values.push_back(d.mu);
      continue;
    }
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
      const double x = d.mu + d.sigma * standard_normal(rng);
      if (x >= d.low && x <= d.high) {
        values.push_back(x);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw TruncationError("truncated Gaussian for '" + d.name + "' rejected " +
                            std::to_string(max_attempts) + " draws; [low, high] band too narrow");
    }
  }
  return ModelParams(dist.names(), std::move(values));
}

double log_density(const SourceDistribution& dist, const ModelParams& p) {
  if (p.size() != dist.size()) {
    throw DimensionMismatch("log_density: distribution has " + std::to_string(dist.size()) +
                            " dimensions, parameters have " + std::to_string(p.size()));
  }
  double total = 0.0;
  for (const auto& d : dist.dims()) {
    const double x = p.at(d.name);
    if (d.frozen()) {
      if (x != d.mu) return kNegInf;
      continue;
    }
    if (x < d.low || x > d.high) return kNegInf;
    const double z = (x - d.mu) / d.sigma;
    const double mass = normal_cdf((d.high - d.mu) / d.sigma) - normal_cdf((d.low - d.mu) / d.sigma);
    total += -0.5 * z * z - std::log(d.sigma) - 0.5 * std::log(2.0 * std::numbers::pi) -
             std::log(mass);
  }
  return total;
}

double discounted_return(const Trajectory& tau, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : tau.rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

double undiscounted_return(const Trajectory& tau) {
  double total = 0.0;
  for (double r : tau.rewards) total += r;
  return total;
}

std::vector<double> returns_to_go(const Trajectory& tau, double gamma) {
  std::vector<double> out(tau.length());
  double acc = 0.0;
  for (std::size_t t = tau.length(); t-- > 0;) {
    acc = tau.rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

void EnvSpec::validate() const {
  if (state_dim == 0 || obs_dim == 0 || action_dim == 0) {
    throw ConfigError("env '" + name + "': dimensions must be >= 1");
  }
  if (static_cast<std::size_t>(action_low.size()) != action_dim ||
      static_cast<std::size_t>(action_high.size()) != action_dim) {
    throw DimensionMismatch("env '" + name + "': action bounds do not match action_dim");
  }
  for (std::size_t i = 0; i < action_dim; ++i) {
    if (!(action_low[i] < action_high[i])) {
      throw ConfigError("env '" + name + "': action lower bound must be below upper bound");
    }
  }
}

void Environment::check_params(const ModelParams& p) const {
  for (const auto& name : spec().param_names) {
    if (!p.contains(name)) {
      throw UnknownParameter("env '" + spec().name + "' requires parameter '" + name + "'");
    }
  }
}

}  // namespace epopt
