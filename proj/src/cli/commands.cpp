#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "epopt/cli.h"
#include "epopt/csv.h"
#include "epopt/environments.h"
#include "epopt/error.h"
#include "epopt/parallel.h"

namespace fs = std::filesystem;

namespace epopt {

std::string version_string() { return std::string(EPOPT_VERSION) + "+" + EPOPT_GIT_DESCRIBE; }

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out = "out";
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::size_t parse_workers_env() {
  const char* v = std::getenv(kWorkersEnvVar);
  if (!v || !*v) return 0;
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != std::string(v).size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError(std::string(kWorkersEnvVar) + " must be a non-negative integer, got '" + v + "'");
  }
}

// Precedence: --flag > environment (workers only) > config file.
void apply_overrides(RunConfig& rc, const Overrides& o) {
  if (o.seed) rc.seed = *o.seed;
  if (const std::size_t w = parse_workers_env(); w > 0) rc.workers = w;
  if (o.workers) rc.workers = *o.workers;
  rc.epopt.seed = rc.seed;
  rc.epopt.workers = rc.workers;
  rc.adapt.seed = rc.seed;
  rc.adapt.epopt = rc.epopt;
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("cannot create output directory '" + dir + "'");
  }
  const fs::path probe = fs::path(dir) / ".write_test";
  {
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory '" + dir + "' is not writable");
  }
  fs::remove(probe, ec);
  return dir;
}

// Binary mode: LF line endings on every platform.
void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  body(f);
  f.flush();
  if (!f) throw Error("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const Json& j) {
  write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

Json metadata(const RunConfig& rc) {
  Json m = Json::object();
  m["command"] = to_string(rc.command);
  m["version"] = version_string();
  m["seed"] = rc.seed;
  m["workers"] = resolve_workers(rc.workers);
  m["config"] = rc.raw;
  // The algorithm never sees the target parameters; neither does the echo
  // unless the config discloses them.
  if (rc.target && !rc.target->disclose) m["config"]["adapt"]["target"]["params"] = "<hidden>";
  return m;
}

Json checkpoint_json(const GaussianMlpPolicy& policy, const RunConfig& rc, const std::string& label,
                     std::optional<double> epsilon) {
  Json j = policy.to_json();
  j["env"] = rc.env_name;
  j["env_config"] = rc.env_config;
  Json training = Json::object();
  training["label"] = label;
  training["epsilon"] = epsilon ? Json(*epsilon) : Json(nullptr);
  training["seed"] = rc.seed;
  j["training"] = training;
  return j;
}

std::string eps_tag(double eps) { return "eps_" + format_double(eps); }

TrainResult train_to_csv(const Environment& env, const SourceDistribution& source,
                         const EpoptConfig& config, const std::optional<GaussianMlpPolicy>& initial,
                         std::ostream& csv, std::vector<double>& wall_clock) {
  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& r, const GaussianMlpPolicy&) {
    write_iteration_csv_row(csv, r);
    csv.flush();
    wall_clock.push_back(r.wall_clock_seconds);
  };
  return epopt_train(env, source, config, initial, hooks);
}

int cmd_train(const RunConfig& rc, const fs::path& out_dir, std::ostream& out) {
  Timer timer;
  auto env = make_env(rc.env_name, rc.env_config);
  std::vector<double> wall_clock;
  TrainResult result;
  write_file(out_dir / "learning_curve.csv", [&](std::ostream& csv) {
    write_iteration_csv_header(csv);
    result = train_to_csv(*env, rc.source, rc.epopt, std::nullopt, csv, wall_clock);
  });
  write_json(out_dir / "policy.json", checkpoint_json(result.policy, rc, "epopt", rc.epopt.epsilon));
  Json meta = metadata(rc);
  meta["iteration_wall_clock_seconds"] = wall_clock;
  meta["wall_clock_seconds"] = timer.seconds();
  write_json(out_dir / "metadata.json", meta);
  if (!result.records.empty()) {
    out << "train: " << result.records.size() << " iterations, final mean return "
        << format_double(result.records.back().mean_return) << '\n';
  }
  return kExitOk;
}

int cmd_eval(RunConfig rc, const fs::path& out_dir, std::ostream& out) {
  Timer timer;
  std::ifstream in(rc.checkpoint);
  if (!in) throw ConfigError("cannot open checkpoint '" + rc.checkpoint + "'");
  Json ckpt;
  try {
    ckpt = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("checkpoint '" + rc.checkpoint + "': " + e.what());
  }
  const GaussianMlpPolicy policy = GaussianMlpPolicy::from_json(ckpt);
  if (!ckpt.contains("env") || !ckpt["env"].is_string()) {
    throw ConfigError("checkpoint '" + rc.checkpoint + "' does not record its env");
  }
  const std::string env_name = ckpt["env"].get<std::string>();
  if (!rc.env_name.empty() && rc.env_name != env_name) {
    throw ConfigError("config env '" + rc.env_name + "' does not match checkpoint env '" +
                      env_name + "'");
  }
  if (rc.env_name.empty()) {
    rc.env_name = env_name;
    if (!rc.raw.contains("env_config") && ckpt.contains("env_config")) {
      rc.env_config = ckpt["env_config"];
    }
    rc.source = default_source(env_name);
  }
  auto env = make_env(rc.env_name, rc.env_config);
  const GridSpec grid = complete_grid(*rc.grid, *env, rc.source);

  std::string label = "policy";
  double epsilon = std::numeric_limits<double>::quiet_NaN();
  if (ckpt.contains("training")) {
    const Json& t = ckpt["training"];
    if (t.contains("label") && t["label"].is_string()) label = t["label"].get<std::string>();
    if (t.contains("epsilon") && t["epsilon"].is_number()) epsilon = t["epsilon"].get<double>();
  }
  const auto cells = grid_evaluate(policy, *env, grid, rc.eval_seed.value_or(rc.seed), 1.0,
                                   rc.workers);
  write_file(out_dir / "heatmap.csv", [&](std::ostream& csv) { write_heatmap_csv(csv, grid, cells); });
  const ReturnStats stats = return_statistics(pooled_returns(cells));
  write_file(out_dir / "stats.csv", [&](std::ostream& csv) {
    write_stats_csv_header(csv);
    write_stats_csv_row(csv, label, epsilon, stats);
  });
  Json meta = metadata(rc);
  meta["checkpoint"] = rc.checkpoint;
  meta["eval_seed"] = rc.eval_seed.value_or(rc.seed);
  meta["wall_clock_seconds"] = timer.seconds();
  write_json(out_dir / "metadata.json", meta);
  out << "eval: " << cells.size() << " cells, mean return " << format_double(stats.mean) << '\n';
  return kExitOk;
}

int cmd_adapt(const RunConfig& rc, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  Timer timer;
  auto model = make_env(rc.env_name, rc.env_config);
  auto target_env = make_env(rc.env_name, rc.env_config);
  TargetDomain target(*target_env, rc.target->params, rc.target->state_noise);

  Json records = Json::array();
  AdaptHooks hooks;
  hooks.on_round = [&](const AdaptRecord& r) {
    records.push_back(r.to_json());
    if (r.low_ess_warning) {
      err << "warning: round " << r.round << ": effective sample size "
          << format_double(*r.ess) << " < " << format_double(kLowEssThreshold)
          << " (posterior collapse risk)\n";
    }
  };
  AdaptResult result;
  try {
    result = adapt_loop(target, *model, rc.source, rc.adapt, hooks);
  } catch (...) {
    // Keep the rounds that finished.
    write_json(out_dir / "rounds.json", records);
    throw;
  }
  write_json(out_dir / "rounds.json", records);
  write_file(out_dir / "adapt_returns.csv", [&](std::ostream& csv) {
    csv << "round,target_return,ess,low_ess_warning";
    for (const auto& d : rc.source.dims()) csv << ',' << d.name << "_mu," << d.name << "_sigma";
    csv << '\n';
    for (const auto& r : result.records) {
      if (r.round == 0) continue;
      csv << r.round << ',' << format_double(*r.target_return) << ',' << format_double(*r.ess)
          << ',' << (r.low_ess_warning ? 1 : 0);
      for (const auto& d : r.source.dims()) {
        csv << ',' << format_double(d.mu) << ',' << format_double(d.sigma);
      }
      csv << '\n';
    }
  });
  write_json(out_dir / "policy.json", checkpoint_json(result.policy, rc, "adapted", rc.epopt.epsilon));
  Json meta = metadata(rc);
  const Vector sigma_lik = rc.adapt.resolved_sigma_lik(*model);
  meta["sigma_lik"] = std::vector<double>(sigma_lik.data(), sigma_lik.data() + sigma_lik.size());
  meta["target_episodes"] = target.episodes();
  if (rc.target->disclose) meta["target_params"] = rc.target->params.to_json();
  meta["wall_clock_seconds"] = timer.seconds();
  write_json(out_dir / "metadata.json", meta);
  out << "adapt: " << rc.adapt.rounds << " rounds, " << target.episodes() << " target episodes\n";
  return kExitOk;
}

int cmd_sweep_epsilon(const RunConfig& rc, const fs::path& out_dir, std::ostream& out) {
  Timer timer;
  auto env = make_env(rc.env_name, rc.env_config);
  const GridSpec grid = complete_grid(*rc.grid, *env, rc.source);
  const std::uint64_t eval_seed = rc.eval_seed.value_or(rc.seed);
  Json meta = metadata(rc);
  Json timing = Json::object();

  // The warm-up phase (epsilon = 1) is identical for every epsilon, so it
  // is trained once and each run resumes from it.
  const int warmup = rc.epopt.resolved_warmup();
  EpoptConfig warm_cfg = rc.epopt;
  warm_cfg.niter = warmup;
  warm_cfg.warmup_iters = warmup;
  warm_cfg.epsilon = 1.0;
  std::vector<double> warm_clock;
  std::ostringstream warm_csv;
  const GaussianMlpPolicy warm =
      train_to_csv(*env, rc.source, warm_cfg, std::nullopt, warm_csv, warm_clock).policy;

  std::vector<std::pair<std::string, double>> rows;
  std::vector<ReturnStats> stats;
  for (double eps : rc.sweep.epsilons) {
    EpoptConfig cfg = rc.epopt;
    cfg.epsilon = eps;
    cfg.warmup_iters = warmup;
    cfg.start_iteration = warmup;
    std::vector<double> clock = warm_clock;
    GaussianMlpPolicy policy;
    write_file(out_dir / ("learning_curve_" + eps_tag(eps) + ".csv"), [&](std::ostream& csv) {
      write_iteration_csv_header(csv);
      csv << warm_csv.str();
      policy = train_to_csv(*env, rc.source, cfg, warm, csv, clock).policy;
    });
    write_json(out_dir / ("policy_" + eps_tag(eps) + ".json"), checkpoint_json(policy, rc, "epopt", eps));
    const auto cells = grid_evaluate(policy, *env, grid, eval_seed, 1.0, rc.workers);
    write_file(out_dir / ("heatmap_" + eps_tag(eps) + ".csv"),
               [&](std::ostream& csv) { write_heatmap_csv(csv, grid, cells); });
    rows.emplace_back("epopt", eps);
    stats.push_back(return_statistics(pooled_returns(cells)));
    timing[eps_tag(eps)] = clock;
  }

  if (rc.sweep.max_likelihood) {
    EpoptConfig cfg = rc.epopt;
    cfg.epsilon = 1.0;
    std::vector<double> clock;
    GaussianMlpPolicy policy;
    write_file(out_dir / "learning_curve_max_lik.csv", [&](std::ostream& csv) {
      write_iteration_csv_header(csv);
      policy = train_to_csv(*env, rc.source.point_mass(), cfg, std::nullopt, csv, clock).policy;
    });
    write_json(out_dir / "policy_max_lik.json", checkpoint_json(policy, rc, "max-lik", std::nullopt));
    const auto cells = grid_evaluate(policy, *env, grid, eval_seed, 1.0, rc.workers);
    write_file(out_dir / "heatmap_max_lik.csv",
               [&](std::ostream& csv) { write_heatmap_csv(csv, grid, cells); });
    rows.emplace_back("max-lik", std::numeric_limits<double>::quiet_NaN());
    stats.push_back(return_statistics(pooled_returns(cells)));
    timing["max_lik"] = clock;
  }

  write_file(out_dir / "stats.csv", [&](std::ostream& csv) {
    write_stats_csv_header(csv);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      write_stats_csv_row(csv, rows[i].first, rows[i].second, stats[i]);
    }
  });
  meta["eval_seed"] = eval_seed;
  meta["iteration_wall_clock_seconds"] = timing;
  meta["wall_clock_seconds"] = timer.seconds();
  write_json(out_dir / "metadata.json", meta);
  out << "sweep-epsilon: " << rows.size() << " rows\n";
  return kExitOk;
}

int dispatch(Command command, const std::string& config_path, const Overrides& o,
             std::ostream& out, std::ostream& err) {
  RunConfig rc = load_run_config(config_path, command);
  apply_overrides(rc, o);
  const fs::path out_dir = prepare_out_dir(o.out);
  switch (command) {
    case Command::train: return cmd_train(rc, out_dir, out);
    case Command::eval: return cmd_eval(rc, out_dir, out);
    case Command::adapt: return cmd_adapt(rc, out_dir, out, err);
    case Command::sweep_epsilon: return cmd_sweep_epsilon(rc, out_dir, out);
  }
  return kExitRuntime;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EPOpt: robust policy search over model ensembles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  std::string config_path;
  Overrides overrides;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::optional<Command> chosen;
  const std::vector<std::pair<Command, const char*>> commands = {
      {Command::train, "Train an EPOpt policy"},
      {Command::eval, "Evaluate a checkpoint over a parameter grid"},
      {Command::adapt, "Adapt the source distribution to a target domain"},
      {Command::sweep_epsilon, "Train and evaluate one policy per epsilon"}};
  for (const auto& [command, help] : commands) {
    CLI::App* sub = app.add_subcommand(to_string(command), help);
    sub->add_option("--config", config_path, "JSON run config")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", overrides.out, "Output directory")->capture_default_str();
    sub->add_option("--workers", workers,
                    std::string("Rollout threads (0: all cores); env ") + kWorkersEnvVar);
    sub->callback([&, command = command] { chosen = command; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed")) overrides.seed = seed;
    if (sub->count("--workers")) overrides.workers = workers;
  }

  try {
    return dispatch(*chosen, config_path, overrides, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnknownParameter& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DegeneratePosterior& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace epopt
