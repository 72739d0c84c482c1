#pragma once

#include "morph/scenario.hpp"

#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace morph {

struct MetricsRow {
  double pce = 0.0;
  double rce = 0.0;
  double sorr = 0.0;
  double time_cost = 0.0;  // total duration, s
  double total_cost = 0.0;
  double energy = 0.0;
  double rmse = std::numeric_limits<double>::quiet_NaN();
};

/// Search then optimize in the given mode. Throws SearchError or OptimizationError.
struct PlanOutcome {
  PlanMode mode = PlanMode::kAdaptive;
  SearchResult search;
  OptResult optimized;
  OptProblem problem;
  MetricsRow metrics;
};

PlanOutcome run_plan(const Scenario& scenario, const EsdfField& field, PlanMode mode);

/// Optimization problem for a mode: frozen radius at r_max/r_min for the fixed
/// modes, and the payload geometry attached when the scenario carries one.
OptProblem make_problem(const Scenario& scenario, const EsdfField& field, PlanMode mode, const PlanState& start,
                        const PlanState& goal);

/// Start and goal with the radius forced for fixed modes.
std::pair<PlanState, PlanState> mode_endpoints(const Scenario& scenario, PlanMode mode);

/// c1 int ||F||^1.5 + c2 int ((r - r_max)/r_max)^2 with F from differential
/// flatness, by Simpson quadrature on the 100 Hz export grid.
double trajectory_energy(const PiecewiseTrajectory& traj, double mass, double r_max, const EnergySpec& energy);

/// Composite Simpson on possibly non-uniform nodes (pairs of intervals; a
/// trailing odd interval uses the quadratic through the last three nodes).
double simpson(const std::vector<double>& t, const std::vector<double>& f);

/// Cost terms recomputed by quadrature from exported samples
/// (t, x, y, z, r, 1st, 2nd, 3rd derivative columns).
MetricsRow metrics_from_samples(const std::vector<std::vector<double>>& rows, double r_max, double a, double w_t);

struct ModeSummary {
  PlanMode mode = PlanMode::kAdaptive;
  int attempts = 0;
  int successes = 0;
  MetricsRow mean;  // over successes
};

struct BenchmarkRun {
  std::uint64_t seed = 0;
  PlanMode mode = PlanMode::kAdaptive;
  bool success = false;
  std::string failure;
  MetricsRow metrics;
};

struct BenchmarkResult {
  std::vector<BenchmarkRun> runs;  // sorted by (seed, mode)
  std::vector<ModeSummary> summary;  // adaptive, fixed-max, fixed-min
};

/// All three modes over the scenario's seed list; seeds run on up to `jobs` threads.
BenchmarkResult run_benchmark(const Scenario& scenario, int jobs);

void write_metrics_csv(const std::vector<std::pair<std::string, MetricsRow>>& rows, std::ostream& out);
void write_benchmark_csv(const BenchmarkResult& result, std::ostream& out);
void write_benchmark_runs_csv(const BenchmarkResult& result, std::ostream& out);

}  // namespace morph
