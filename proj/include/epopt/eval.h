#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "epopt/epopt.h"
#include "epopt/mdp.h"
#include "epopt/policy.h"

namespace epopt {

struct GridAxis {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  int points = 2;
};

// Up to two swept parameters; every other env parameter comes from `fixed`.
struct GridSpec {
  std::vector<GridAxis> axes;
  ModelParams fixed;
  int episodes = 20;
  bool deterministic = true;  // act with the policy mean
  std::size_t horizon = 0;    // 0: env default

  void validate(const Environment& env) const;
  std::size_t num_cells() const;
};

struct GridCell {
  ModelParams params;
  std::vector<double> returns;  // one per episode
  double mean = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
};

// Rolls out `episodes` episodes per grid cell. Episode e of every cell shares
// the initial-state stream (seed, e), so cells differ only in the model.
// Returns cells in row-major order over the axes (last axis fastest).
std::vector<GridCell> grid_evaluate(const GaussianMlpPolicy& policy, const Environment& env,
                                    const GridSpec& grid, std::uint64_t seed, double gamma = 1.0,
                                    std::size_t workers = 1);

struct ReturnStats {
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator; 0 when n == 1
  double min = 0.0;
  double max = 0.0;
  double p5 = 0.0;
  double p10 = 0.0;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
};

// Element of rank ceil(q / 100 * n) in sorted order (rank >= 1).
double percentile(std::span<const double> values, double q);
ReturnStats return_statistics(std::span<const double> returns);
std::vector<double> pooled_returns(const std::vector<GridCell>& cells);

struct UnmodeledResult {
  GaussianMlpPolicy full_policy;
  GaussianMlpPolicy reduced_policy;
  std::vector<GridCell> full;
  std::vector<GridCell> reduced;
};

// Trains one policy on `full_source` and one on `reduced_source` (the same
// distribution with `frozen_param` pinned at its mean), then evaluates both
// on `grid`, which must sweep the frozen parameter.
UnmodeledResult unmodeled_protocol(const Environment& env, const SourceDistribution& full_source,
                                   const SourceDistribution& reduced_source,
                                   const std::string& frozen_param, const EpoptConfig& config,
                                   const GridSpec& grid, std::uint64_t eval_seed);

// Header: one column per axis name, then mean,p10,p90.
void write_heatmap_csv(std::ostream& out, const GridSpec& grid, const std::vector<GridCell>& cells);

inline constexpr const char* kStatsCsvHeader = "label,epsilon,mean,std,p5,p10,p25,p50,p75,p90";
void write_stats_csv_header(std::ostream& out);
void write_stats_csv_row(std::ostream& out, const std::string& label, double epsilon,
                         const ReturnStats& stats);

}  // namespace epopt
