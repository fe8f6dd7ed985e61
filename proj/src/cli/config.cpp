#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "epopt/cli.h"
#include "epopt/environments.h"
#include "epopt/error.h"

namespace epopt {

namespace {

// Field access with dotted-path diagnostics. Every key read is remembered so
// finish() can reject unknown (typically misspelled) keys.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + where() + "' must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const Json& require(const std::string& key) {
    if (!has(key)) throw ConfigError("missing required field '" + field(key) + "'");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const Json& v = require(key);
    if (!v.is_number()) throw ConfigError("field '" + field(key) + "' must be a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  long long integer(const std::string& key) {
    const Json& v = require(key);
    if (!v.is_number_integer()) throw ConfigError("field '" + field(key) + "' must be an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& key, long long fallback) {
    return has(key) ? integer(key) : fallback;
  }
  std::size_t count(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const long long v = integer(key);
    if (v < 0) throw ConfigError("field '" + field(key) + "' must be >= 0");
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError("field '" + field(key) + "' must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const Json& v = require(key);
    if (!v.is_string()) throw ConfigError("field '" + field(key) + "' must be a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = require(key);
    if (!v.is_array()) throw ConfigError("field '" + field(key) + "' must be an array");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError("field '" + field(key) + "' must hold numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  Fields object(const std::string& key) { return Fields(require(key), field(key)); }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown field '" + field(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto rethrow_at(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

PolOptConfig parse_polopt(Fields f) {
  PolOptConfig c;
  if (f.has("method")) c.method = parse_polopt_method(f.string("method"));
  c.learning_rate = f.number("learning_rate", c.learning_rate);
  c.kl_step = f.number("kl_step", c.kl_step);
  c.cg_iters = static_cast<int>(f.integer("cg_iters", c.cg_iters));
  c.cg_damping = f.number("cg_damping", c.cg_damping);
  c.backtrack_ratio = f.number("backtrack_ratio", c.backtrack_ratio);
  c.max_backtracks = static_cast<int>(f.integer("max_backtracks", c.max_backtracks));
  c.normalize_advantages = f.boolean("normalize_advantages", c.normalize_advantages);
  c.fisher_subsample = f.number("fisher_subsample", c.fisher_subsample);
  f.finish();
  return c;
}

// epsilon is optional only where the caller supplies it (sweep-epsilon).
EpoptConfig parse_epopt(Fields f, bool require_epsilon) {
  EpoptConfig c;
  c.niter = static_cast<int>(f.integer("niter"));
  c.n = static_cast<int>(f.integer("n"));
  c.epsilon = require_epsilon ? f.number("epsilon") : f.number("epsilon", 1.0);
  c.warmup_iters = static_cast<int>(f.integer("warmup_iters", c.warmup_iters));
  c.gamma = f.number("gamma", c.gamma);
  c.horizon = f.count("horizon", c.horizon);
  if (f.has("hidden")) {
    c.hidden.clear();
    for (double w : f.numbers("hidden")) {
      if (!(w >= 1.0) || w != static_cast<double>(static_cast<std::size_t>(w))) {
        throw ConfigError("field '" + f.field("hidden") + "' must hold positive integers");
      }
      c.hidden.push_back(static_cast<std::size_t>(w));
    }
  }
  c.use_baseline = f.boolean("use_baseline", c.use_baseline);
  c.baseline_ridge = f.number("baseline_ridge", c.baseline_ridge);
  c.cvar_subsampling = f.boolean("cvar_subsampling", c.cvar_subsampling);
  if (f.has("polopt")) c.polopt = parse_polopt(f.object("polopt"));
  f.finish();
  return c;
}

GridSpec parse_grid(Fields f) {
  GridSpec g;
  const Json& axes = f.require("axes");
  if (!axes.is_array()) throw ConfigError("field '" + f.field("axes") + "' must be an array");
  for (std::size_t i = 0; i < axes.size(); ++i) {
    Fields a(axes[i], f.field("axes") + "[" + std::to_string(i) + "]");
    GridAxis axis;
    axis.name = a.string("name");
    axis.min = a.number("min");
    axis.max = a.number("max");
    axis.points = static_cast<int>(a.integer("points"));
    a.finish();
    g.axes.push_back(axis);
  }
  if (f.has("fixed")) {
    const std::string path = f.field("fixed");
    g.fixed = rethrow_at(path, [&] { return ModelParams::from_json(f.require("fixed")); });
  }
  g.episodes = static_cast<int>(f.integer("episodes", g.episodes));
  g.deterministic = f.boolean("deterministic", g.deterministic);
  g.horizon = f.count("horizon", g.horizon);
  f.finish();
  return g;
}

void parse_adapt(Fields f, RunConfig& rc) {
  AdaptConfig& a = rc.adapt;
  a.m = static_cast<int>(f.integer("m", a.m));
  if (f.has("sampling")) a.sampling = parse_sampling(f.string("sampling"));
  if (f.has("sigma_lik")) {
    const auto s = f.numbers("sigma_lik");
    a.sigma_lik = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  }
  a.rounds = static_cast<int>(f.integer("rounds"));
  a.sigma_floor_fraction = f.number("sigma_floor_fraction", a.sigma_floor_fraction);
  Fields t = f.object("target");
  TargetSpec target;
  const std::string path = t.field("params");
  target.params = rethrow_at(path, [&] { return ModelParams::from_json(t.require("params")); });
  target.state_noise = t.number("state_noise", 0.0);
  target.disclose = t.boolean("disclose", false);
  t.finish();
  rc.target = target;
  f.finish();
}

template <typename Config>
void apply_env_fields(Fields& f, Config& c) {
  c.gravity = f.number("gravity", c.gravity);
  c.dt = f.number("dt", c.dt);
  c.horizon = f.count("horizon", c.horizon);
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::train: return "train";
    case Command::eval: return "eval";
    case Command::adapt: return "adapt";
    case Command::sweep_epsilon: return "sweep-epsilon";
  }
  return "unknown";
}

std::unique_ptr<Environment> make_env(const std::string& name, const Json& env_config) {
  const Json cfg = env_config.is_null() ? Json::object() : env_config;
  Fields f(cfg, "env_config");
  if (name == "pendulum") {
    PendulumEnv::Config c;
    apply_env_fields(f, c);
    c.max_torque = f.number("max_torque", c.max_torque);
    c.init_angle_noise = f.number("init_angle_noise", c.init_angle_noise);
    c.init_velocity_noise = f.number("init_velocity_noise", c.init_velocity_noise);
    f.finish();
    return std::make_unique<PendulumEnv>(c);
  }
  if (name == "spring_hopper") {
    SpringHopperEnv::Config c;
    apply_env_fields(f, c);
    c.max_thrust = f.number("max_thrust", c.max_thrust);
    c.rest_length = f.number("rest_length", c.rest_length);
    c.drop_height = f.number("drop_height", c.drop_height);
    c.init_height_noise = f.number("init_height_noise", c.init_height_noise);
    c.alive_bonus = f.number("alive_bonus", c.alive_bonus);
    c.crash_fraction = f.number("crash_fraction", c.crash_fraction);
    f.finish();
    return std::make_unique<SpringHopperEnv>(c);
  }
  return make_env(name);  // throws the unknown-env error
}

GridSpec complete_grid(GridSpec grid, const Environment& env, const SourceDistribution& source) {
  for (const auto& name : env.spec().param_names) {
    const bool swept = std::any_of(grid.axes.begin(), grid.axes.end(),
                                   [&](const GridAxis& a) { return a.name == name; });
    if (!swept && !grid.fixed.contains(name) && source.index_of(name)) {
      grid.fixed = grid.fixed.with(name, source.dim(name).mu);
    }
  }
  grid.validate(env);
  return grid;
}

RunConfig parse_run_config(const Json& doc, Command command) {
  RunConfig rc;
  rc.command = command;
  rc.raw = doc;
  Fields root(doc, "");

  const long long version = root.integer("schema_version");
  if (version != kConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");
  }
  if (root.has("command") && root.string("command") != to_string(command)) {
    throw ConfigError("config is for command '" + root.string("command") + "', not '" +
                      to_string(command) + "'");
  }
  rc.seed = static_cast<std::uint64_t>(root.count("seed", 0));
  rc.workers = root.count("workers", 0);

  // eval takes the env from the checkpoint unless one is given.
  const bool needs_env = command != Command::eval;
  if (needs_env || root.has("env")) rc.env_name = root.string("env");
  if (root.has("env_config")) rc.env_config = root.require("env_config");
  if (!rc.env_name.empty()) {
    auto env = make_env(rc.env_name, rc.env_config);  // validates env_config
    if (root.has("source")) {
      rc.source = rethrow_at("source", [&] { return SourceDistribution::from_json(root.require("source")); });
      for (const auto& name : env->spec().param_names) {
        if (!rc.source.index_of(name)) {
          throw ConfigError("field 'source' has no entry for env parameter '" + name + "'");
        }
      }
    } else {
      rc.source = default_source(rc.env_name);
    }
  }

  const bool needs_epopt = command != Command::eval;
  if (needs_epopt) {
    rc.epopt = parse_epopt(root.object("epopt"), command != Command::sweep_epsilon);
  } else {
    root.has("epopt");  // tolerated (shared config files), not used
  }
  rc.epopt.seed = rc.seed;
  rc.epopt.workers = rc.workers;

  if (command == Command::eval) {
    Fields e = root.object("eval");
    rc.checkpoint = e.string("checkpoint");
    rc.grid = parse_grid(e.object("grid"));
    if (e.has("seed")) rc.eval_seed = static_cast<std::uint64_t>(e.count("seed", 0));
    e.finish();
  } else if (root.has("eval")) {
    Fields e = root.object("eval");
    if (e.has("checkpoint")) e.string("checkpoint");
    if (e.has("grid")) rc.grid = parse_grid(e.object("grid"));
    if (e.has("seed")) rc.eval_seed = static_cast<std::uint64_t>(e.count("seed", 0));
    e.finish();
  }

  if (command == Command::adapt) {
    parse_adapt(root.object("adapt"), rc);
    rc.adapt.epopt = rc.epopt;
    rc.adapt.seed = rc.seed;
  } else if (root.has("adapt")) {
    root.require("adapt");
  }

  if (command == Command::sweep_epsilon) {
    Fields s = root.object("sweep");
    rc.sweep.epsilons = s.numbers("epsilons");
    rc.sweep.max_likelihood = s.boolean("max_likelihood", true);
    s.finish();
    if (rc.sweep.epsilons.empty()) throw ConfigError("field 'sweep.epsilons' must not be empty");
    if (!rc.grid) throw ConfigError("missing required field 'eval.grid'");
  } else if (root.has("sweep")) {
    root.require("sweep");
  }
  root.finish();

  // Cross-field checks, reported as config errors.
  if (needs_epopt) {
    EpoptConfig probe = rc.epopt;
    for (double eps : command == Command::sweep_epsilon ? rc.sweep.epsilons
                                                         : std::vector<double>{rc.epopt.epsilon}) {
      probe.epsilon = eps;
      probe.validate();
    }
  }
  if (command == Command::adapt) {
    auto env = make_env(rc.env_name, rc.env_config);
    rc.adapt.validate(*env);
    rethrow_at("adapt.target.params", [&] {
      env->check_params(rc.target->params);
      return 0;
    });
  }
  if (rc.grid && !rc.env_name.empty()) {
    auto env = make_env(rc.env_name, rc.env_config);
    rc.grid = rethrow_at("eval.grid", [&] { return complete_grid(*rc.grid, *env, rc.source); });
  }
  return rc;
}

RunConfig load_run_config(const std::string& path, Command command) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return parse_run_config(doc, command);
}

}  // namespace epopt
