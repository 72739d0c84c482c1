#include "morph/pipeline.hpp"

#include "morph/log.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace morph {

std::pair<PlanState, PlanState> mode_endpoints(const Scenario& scenario, PlanMode mode) {
  PlanState start = scenario.start, goal = scenario.goal;
  const auto force_radius = [&](double r) {
    start.r = goal.r = r;
    start.v_r = goal.v_r = 0.0;
  };
  if (mode == PlanMode::kFixedMax) {
    force_radius(scenario.body.r_max);
  } else if (mode == PlanMode::kFixedMin) {
    force_radius(scenario.body.r_min);
  } else if (scenario.payload) {
    force_radius(scenario.start.r);
  }
  return {start, goal};
}

OptProblem make_problem(const Scenario& scenario, const EsdfField& field, PlanMode mode, const PlanState& start,
                        const PlanState& goal) {
  OptProblem p = scenario.optimization;
  p.field = &field;
  p.body = scenario.body;
  p.body.radius = start.r;
  p.head = BoundaryState::Zero();
  p.tail = BoundaryState::Zero();
  p.head.col(0) = start.position4();
  p.head.col(1) = start.velocity4();
  p.tail.col(0) = goal.position4();
  p.tail.col(1) = goal.velocity4();
  p.radius_mode = mode == PlanMode::kAdaptive ? RadiusMode::kFree : RadiusMode::kFrozen;
  if (scenario.payload) p = attach_payload(p, *scenario.payload);
  return p;
}

double simpson(const std::vector<double>& t, const std::vector<double>& f) {
  const std::size_t n = t.size();
  if (n < 2) return 0.0;
  if (n == 2) return 0.5 * (t[1] - t[0]) * (f[0] + f[1]);
  double sum = 0.0;
  std::size_t i = 0;
  for (; i + 2 < n; i += 2) {
    const double h0 = t[i + 1] - t[i], h1 = t[i + 2] - t[i + 1];
    sum += (h0 + h1) / 6.0 *
           ((2.0 - h1 / h0) * f[i] + (h0 + h1) * (h0 + h1) / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
  }
  if (i + 1 < n) {
    // Last interval [t_{n-2}, t_{n-1}] from the quadratic through the last three nodes.
    const double h0 = t[n - 2] - t[n - 3], h1 = t[n - 1] - t[n - 2];
    sum += h1 * (f[n - 1] * (2.0 * h1 + 3.0 * h0) / (6.0 * (h0 + h1)) + f[n - 2] * (h1 + 3.0 * h0) / (6.0 * h0) -
                 f[n - 3] * h1 * h1 / (6.0 * h0 * (h0 + h1)));
  }
  return sum;
}

double trajectory_energy(const PiecewiseTrajectory& traj, double mass, double r_max, const EnergySpec& energy) {
  const std::vector<double> ts = traj.sample_times(100.0);
  std::vector<double> f(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const Vec4 a = traj.eval(ts[k], 2);
    const double thrust = reference_thrust(a.head<3>(), mass);
    f[k] = power(thrust, traj.eval(ts[k], 0)[3], r_max, energy.c1, energy.c2);
  }
  return simpson(ts, f);
}

MetricsRow metrics_from_samples(const std::vector<std::vector<double>>& rows, double r_max, double a, double w_t) {
  MetricsRow m;
  if (rows.empty()) return m;
  std::vector<double> t, pce, rce, sorr;
  for (const auto& row : rows) {
    if (row.size() < 17) throw std::invalid_argument("trajectory sample row needs 17 columns");
    t.push_back(row[0]);
    pce.push_back(row[13] * row[13] + row[14] * row[14] + row[15] * row[15]);
    rce.push_back(row[16] * row[16]);
    const double e = (row[4] - r_max) / r_max;
    sorr.push_back(e * e);
  }
  m.pce = simpson(t, pce);
  m.rce = simpson(t, rce);
  m.sorr = simpson(t, sorr);
  m.time_cost = t.back() - t.front();
  m.total_cost = m.pce + m.rce + a * m.sorr + w_t * m.time_cost;
  return m;
}

PlanOutcome run_plan(const Scenario& scenario, const EsdfField& field, PlanMode mode) {
  PlanOutcome out;
  out.mode = mode;
  const auto [start, goal] = mode_endpoints(scenario, mode);
  out.problem = make_problem(scenario, field, mode, start, goal);
  SearchConfig sc = scenario.search;
  sc.freeze_radius = out.problem.radius_mode == RadiusMode::kFrozen;
  out.search = search(start, goal, field, out.problem.body, sc);
  logger().info("{}: search found {} primitives, cost {:.4f}, {} expansions", to_string(mode),
                out.search.path.size() - 1, out.search.cost, out.search.expanded);
  out.optimized = optimize(out.search.path, out.problem);
  const OptReport& r = out.optimized.report;
  out.metrics.pce = r.pce;
  out.metrics.rce = r.rce;
  out.metrics.sorr = r.sorr;
  out.metrics.time_cost = r.time;
  out.metrics.total_cost = r.total;
  out.metrics.energy =
      trajectory_energy(out.optimized.trajectory, scenario.tracking.vehicle.mass, scenario.body.r_max, scenario.energy);
  logger().info("{}: optimized in {} iterations ({}), total cost {:.4f}", to_string(mode), r.iterations, r.status,
                r.total);
  return out;
}

BenchmarkResult run_benchmark(const Scenario& scenario, int jobs) {
  const std::vector<std::uint64_t>& seeds = scenario.benchmark.seeds;
  constexpr PlanMode kModes[3] = {PlanMode::kAdaptive, PlanMode::kFixedMax, PlanMode::kFixedMin};
  const int n = static_cast<int>(seeds.size());
  std::vector<BenchmarkRun> runs(static_cast<std::size_t>(n) * 3);

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (int i = 0; i < n; ++i) {
    const MapSpec map = jittered_map(scenario.map, scenario.benchmark.jitter, seeds[i]);
    const EsdfField field = compute_esdf_serial(build_grid(map.obstacles, map.bounds, map.resolution),
                                                map.truncation);
    for (int m = 0; m < 3; ++m) {
      BenchmarkRun& run = runs[3 * i + m];
      run.seed = seeds[i];
      run.mode = kModes[m];
      try {
        run.metrics = run_plan(scenario, field, kModes[m]).metrics;
        run.success = true;
      } catch (const SearchError& e) {
        run.failure = to_string(e.failure());
      } catch (const OptimizationError& e) {
        run.failure = e.kind() == OptimizationError::Kind::kVerificationFailed ? "verification-failed" : "seed-too-short";
      }
    }
  }

  std::sort(runs.begin(), runs.end(), [](const BenchmarkRun& a, const BenchmarkRun& b) {
    return std::make_pair(a.seed, static_cast<int>(a.mode)) < std::make_pair(b.seed, static_cast<int>(b.mode));
  });
  BenchmarkResult result;
  result.runs = runs;
  for (const PlanMode mode : kModes) {
    ModeSummary s;
    s.mode = mode;
    s.mean.rmse = std::numeric_limits<double>::quiet_NaN();
    for (const auto& run : runs) {
      if (run.mode != mode) continue;
      ++s.attempts;
      if (!run.success) continue;
      ++s.successes;
      s.mean.pce += run.metrics.pce;
      s.mean.rce += run.metrics.rce;
      s.mean.sorr += run.metrics.sorr;
      s.mean.time_cost += run.metrics.time_cost;
      s.mean.total_cost += run.metrics.total_cost;
      s.mean.energy += run.metrics.energy;
    }
    if (s.successes > 0) {
      const double k = 1.0 / s.successes;
      s.mean.pce *= k;
      s.mean.rce *= k;
      s.mean.sorr *= k;
      s.mean.time_cost *= k;
      s.mean.total_cost *= k;
      s.mean.energy *= k;
    }
    result.summary.push_back(s);
  }
  return result;
}

namespace {

std::string number(double v) { return std::isnan(v) ? std::string() : fmt::format("{:.10g}", v); }

}  // namespace

void write_metrics_csv(const std::vector<std::pair<std::string, MetricsRow>>& rows, std::ostream& out) {
  out << "mode,pce,rce,sorr,time_cost,total_cost,total_energy,rmse\n";
  for (const auto& [label, m] : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", label, number(m.pce), number(m.rce), number(m.sorr),
                       number(m.time_cost), number(m.total_cost), number(m.energy), number(m.rmse));
  }
}

void write_benchmark_csv(const BenchmarkResult& result, std::ostream& out) {
  out << "mode,pce,rce,sorr,time_cost,total_cost,total_energy,success_rate,successes,attempts\n";
  for (const auto& s : result.summary) {
    const bool any = s.successes > 0;
    const auto cell = [&](double v) { return any ? number(v) : std::string(); };
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(s.mode), cell(s.mean.pce), cell(s.mean.rce),
                       cell(s.mean.sorr), cell(s.mean.time_cost), cell(s.mean.total_cost), cell(s.mean.energy),
                       number(s.attempts > 0 ? double(s.successes) / s.attempts : 0.0), s.successes, s.attempts);
  }
}

void write_benchmark_runs_csv(const BenchmarkResult& result, std::ostream& out) {
  out << "seed,mode,success,failure,pce,rce,sorr,time_cost,total_cost,total_energy\n";
  for (const auto& r : result.runs) {
    const auto cell = [&](double v) { return r.success ? number(v) : std::string(); };
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.seed, to_string(r.mode), r.success ? 1 : 0, r.failure,
                       cell(r.metrics.pce), cell(r.metrics.rce), cell(r.metrics.sorr), cell(r.metrics.time_cost),
                       cell(r.metrics.total_cost), cell(r.metrics.energy));
  }
}

}  // namespace morph
