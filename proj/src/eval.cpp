#include "epopt/eval.h"

#include <algorithm>
#include <cmath>

#include "epopt/csv.h"
#include "epopt/error.h"
#include "epopt/parallel.h"
#include "epopt/rollout.h"

namespace epopt {

void GridSpec::validate(const Environment& env) const {
  if (axes.empty() || axes.size() > 2) throw ConfigError("grid: expected 1 or 2 axes");
  if (episodes < 1) throw ConfigError("grid.episodes must be >= 1");
  const auto& names = env.spec().param_names;
  for (const auto& axis : axes) {
    if (std::find(names.begin(), names.end(), axis.name) == names.end()) {
      throw UnknownParameter("grid axis '" + axis.name + "' is not a parameter of env '" +
                             env.spec().name + "'");
    }
    if (axis.points < 1 || (axis.points == 1 && axis.min != axis.max)) {
      throw ConfigError("grid axis '" + axis.name + "': needs >= 2 points (or 1 with min == max)");
    }
    if (axis.max < axis.min) throw ConfigError("grid axis '" + axis.name + "': max < min");
  }
  for (const auto& name : fixed.names()) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw UnknownParameter("grid fixed parameter '" + name + "' is not a parameter of env '" +
                             env.spec().name + "'");
    }
  }
  for (const auto& name : names) {
    const bool swept = std::any_of(axes.begin(), axes.end(),
                                   [&](const GridAxis& a) { return a.name == name; });
    if (!swept && !fixed.contains(name)) {
      throw ConfigError("grid: no value for env parameter '" + name + "'");
    }
  }
}

std::size_t GridSpec::num_cells() const {
  std::size_t n = 1;
  for (const auto& axis : axes) n *= static_cast<std::size_t>(axis.points);
  return n;
}

namespace {

double axis_value(const GridAxis& axis, int i) {
  if (axis.points == 1) return axis.min;
  return axis.min + (axis.max - axis.min) * static_cast<double>(i) / (axis.points - 1);
}

}  // namespace

std::vector<GridCell> grid_evaluate(const GaussianMlpPolicy& policy, const Environment& env,
                                    const GridSpec& grid, std::uint64_t seed, double gamma,
                                    std::size_t workers) {
  grid.validate(env);
  const std::size_t horizon = grid.horizon > 0 ? grid.horizon : env.spec().horizon;
  std::vector<GridCell> cells(grid.num_cells());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ModelParams p = grid.fixed;
    std::size_t rest = c;
    for (std::size_t a = grid.axes.size(); a-- > 0;) {
      const auto& axis = grid.axes[a];
      const int i = static_cast<int>(rest % static_cast<std::size_t>(axis.points));
      rest /= static_cast<std::size_t>(axis.points);
      p = p.with(axis.name, axis_value(axis, i));
    }
    cells[c].params = std::move(p);
    cells[c].returns.resize(static_cast<std::size_t>(grid.episodes));
  }

  const auto episodes = static_cast<std::size_t>(grid.episodes);
  RolloutOptions options;
  options.deterministic = grid.deterministic;
  parallel_for(cells.size() * episodes, workers, [&](std::size_t job) {
    const std::size_t c = job / episodes;
    const std::size_t e = job % episodes;
    Rng rng = make_stream(seed, {stream_tag::eval_episode, e});
    const Trajectory tau = rollout(env, cells[c].params, policy, horizon, rng, options);
    cells[c].returns[e] = gamma == 1.0 ? undiscounted_return(tau) : discounted_return(tau, gamma);
  });

  for (auto& cell : cells) {
    double sum = 0.0;
    for (double r : cell.returns) sum += r;
    cell.mean = sum / static_cast<double>(cell.returns.size());
    cell.p10 = percentile(cell.returns, 10.0);
    cell.p90 = percentile(cell.returns, 90.0);
  }
  return cells;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error("percentile: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  auto k = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  return sorted[k - 1];
}

ReturnStats return_statistics(std::span<const double> returns) {
  if (returns.empty()) throw Error("return_statistics: empty input");
  ReturnStats s;
  const double n = static_cast<double>(returns.size());
  double sum = 0.0;
  for (double r : returns) sum += r;
  s.mean = sum / n;
  if (returns.size() > 1) {
    double sq = 0.0;
    for (double r : returns) sq += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(sq / (n - 1.0));
  }
  s.min = *std::min_element(returns.begin(), returns.end());
  s.max = *std::max_element(returns.begin(), returns.end());
  s.p5 = percentile(returns, 5);
  s.p10 = percentile(returns, 10);
  s.p25 = percentile(returns, 25);
  s.p50 = percentile(returns, 50);
  s.p75 = percentile(returns, 75);
  s.p90 = percentile(returns, 90);
  return s;
}

std::vector<double> pooled_returns(const std::vector<GridCell>& cells) {
  std::vector<double> all;
  for (const auto& cell : cells) all.insert(all.end(), cell.returns.begin(), cell.returns.end());
  return all;
}

UnmodeledResult unmodeled_protocol(const Environment& env, const SourceDistribution& full_source,
                                   const SourceDistribution& reduced_source,
                                   const std::string& frozen_param, const EpoptConfig& config,
                                   const GridSpec& grid, std::uint64_t eval_seed) {
  const auto& full_dim = full_source.dim(frozen_param);
  const auto& reduced_dim = reduced_source.dim(frozen_param);
  if (!reduced_dim.frozen() || reduced_dim.mu != full_dim.mu) {
    throw ConfigError("unmodeled protocol: '" + frozen_param +
                      "' must be frozen at its mean in the reduced source");
  }
  if (reduced_source.frozen(frozen_param) != full_source.frozen(frozen_param)) {
    throw ConfigError("unmodeled protocol: sources differ outside '" + frozen_param + "'");
  }
  if (std::none_of(grid.axes.begin(), grid.axes.end(),
                   [&](const GridAxis& a) { return a.name == frozen_param; })) {
    throw ConfigError("unmodeled protocol: grid must sweep '" + frozen_param + "'");
  }
  UnmodeledResult out;
  out.full_policy = epopt_train(env, full_source, config).policy;
  out.reduced_policy = epopt_train(env, reduced_source, config).policy;
  out.full = grid_evaluate(out.full_policy, env, grid, eval_seed, 1.0, config.workers);
  out.reduced = grid_evaluate(out.reduced_policy, env, grid, eval_seed, 1.0, config.workers);
  return out;
}

void write_heatmap_csv(std::ostream& out, const GridSpec& grid, const std::vector<GridCell>& cells) {
  for (const auto& axis : grid.axes) out << axis.name << ',';
  out << "mean,p10,p90\n";
  for (const auto& cell : cells) {
    for (const auto& axis : grid.axes) out << format_double(cell.params.at(axis.name)) << ',';
    out << format_double(cell.mean) << ',' << format_double(cell.p10) << ','
        << format_double(cell.p90) << '\n';
  }
}

void write_stats_csv_header(std::ostream& out) { out << kStatsCsvHeader << '\n'; }

void write_stats_csv_row(std::ostream& out, const std::string& label, double epsilon,
                         const ReturnStats& s) {
  out << label << ',' << (std::isnan(epsilon) ? std::string() : format_double(epsilon));
  for (double v : {s.mean, s.std, s.p5, s.p10, s.p25, s.p50, s.p75, s.p90}) {
    out << ',' << format_double(v);
  }
  out << '\n';
}

}  // namespace epopt
