#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "epopt/adaptation.h"
#include "epopt/epopt.h"
#include "epopt/eval.h"
#include "epopt/mdp.h"

namespace epopt {

inline constexpr int kConfigSchemaVersion = 1;

enum class Command { train, eval, adapt, sweep_epsilon };
std::string to_string(Command c);

struct TargetSpec {
  ModelParams params;
  double state_noise = 0.0;
  bool disclose = false;  // echo params into run metadata
};

struct SweepSpec {
  std::vector<double> epsilons;
  bool max_likelihood = true;
};

// Parsed and validated config file. `raw` keeps the original document for
// the metadata echo.
struct RunConfig {
  Command command = Command::train;
  std::string env_name;
  Json env_config = Json::object();
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0: hardware concurrency
  SourceDistribution source;
  EpoptConfig epopt;
  // eval
  std::string checkpoint;
  std::optional<GridSpec> grid;
  std::optional<std::uint64_t> eval_seed;
  // adapt
  AdaptConfig adapt;
  std::optional<TargetSpec> target;
  // sweep-epsilon
  SweepSpec sweep;
  Json raw;
};

// Builds an env from its name plus optional overrides of its Config fields.
std::unique_ptr<Environment> make_env(const std::string& name, const Json& env_config);

// Fills unswept parameters missing from grid.fixed with the source mean,
// then validates against env.
GridSpec complete_grid(GridSpec grid, const Environment& env, const SourceDistribution& source);

// Throws ConfigError naming the offending field.
RunConfig parse_run_config(const Json& doc, Command command);
RunConfig load_run_config(const std::string& path, Command command);

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kWorkersEnvVar = "EPOPT_WORKERS";

// Entry point shared by the executable and the tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace epopt
