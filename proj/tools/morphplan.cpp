// morphplan: plan, simulate, benchmark and plot morphing-quadrotor scenarios.

#include "morph/io.hpp"
#include "morph/log.hpp"
#include "morph/pipeline.hpp"
#include "morph/svg_plot.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace morph;

namespace {

enum ExitCode { kOk = 0, kParse = 1, kNoPath = 2, kOptimization = 3, kVerification = 4, kSimulation = 5 };

template <typename Fn>
std::string render(Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  return ss.str();
}

std::string output_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

int cmd_plan(const std::string& scenario_path, const std::string& out_dir, const std::string& mode_override) {
  const Scenario sc = load_scenario(scenario_path);
  const PlanMode mode = mode_override.empty() ? sc.mode : parse_mode(mode_override);
  const EsdfField field = build_field(sc.map);
  const PlanOutcome plan = run_plan(sc, field, mode);
  const PiecewiseTrajectory& traj = plan.optimized.trajectory;
  write_text_file(output_path(out_dir, "trajectory.csv"), render([&](std::ostream& o) { traj.write_samples_csv(o); }));
  write_text_file(output_path(out_dir, "trajectory.coeffs"),
                  render([&](std::ostream& o) { traj.write_coefficients(o); }));
  write_text_file(output_path(out_dir, "search.csv"),
                  render([&](std::ostream& o) { write_search_csv(plan.search, o); }));
  write_text_file(output_path(out_dir, "metrics.csv"), render([&](std::ostream& o) {
                    write_metrics_csv({{to_string(mode), plan.metrics}}, o);
                  }));
  logger().info("plan written to {}", out_dir);
  return kOk;
}

int cmd_simulate(const std::string& scenario_path, const std::string& traj_path, const std::string& out_dir,
                 bool compare) {
  const Scenario sc = load_scenario(scenario_path);
  const PiecewiseTrajectory traj = load_trajectory(traj_path);
  const TrackingResult on = run_tracking(traj, sc.tracking);
  write_text_file(output_path(out_dir, "tracking.csv"), render([&](std::ostream& o) { write_tracking_log(on, o); }));
  MetricsRow m;
  m.rmse = on.rmse;
  std::vector<std::pair<std::string, MetricsRow>> rows = {{"tracking", m}};
  if (compare) {
    TrackingConfig off_cfg = sc.tracking;
    off_cfg.force_compensation = false;
    off_cfg.indi = false;
    const TrackingResult off = run_tracking(traj, off_cfg);
    write_text_file(output_path(out_dir, "tracking_uncompensated.csv"),
                    render([&](std::ostream& o) { write_tracking_log(off, o); }));
    MetricsRow mo;
    mo.rmse = off.rmse;
    rows.emplace_back("uncompensated", mo);
    write_text_file(output_path(out_dir, "rmse_ratio.csv"),
                    fmt::format("rmse_compensated,rmse_uncompensated,ratio\n{:.10g},{:.10g},{:.10g}\n", on.rmse,
                                off.rmse, on.rmse / off.rmse));
  }
  write_text_file(output_path(out_dir, "tracking_metrics.csv"),
                  render([&](std::ostream& o) { write_metrics_csv(rows, o); }));
  return kOk;
}

int cmd_benchmark(const std::string& scenario_path, const std::string& out_dir, int jobs) {
  const Scenario sc = load_scenario(scenario_path);
  const BenchmarkResult result = run_benchmark(sc, jobs);
  write_text_file(output_path(out_dir, "benchmark.csv"),
                  render([&](std::ostream& o) { write_benchmark_csv(result, o); }));
  write_text_file(output_path(out_dir, "benchmark_runs.csv"),
                  render([&](std::ostream& o) { write_benchmark_runs_csv(result, o); }));
  for (const auto& s : result.summary) {
    if (s.successes > 0) return kOk;
  }
  logger().error("every mode failed on every seed");
  return kNoPath;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out_dir) {
  for (const auto& input : inputs) {
    const NumericTable table = read_numeric_csv_file(input);
    const std::string stem = fs::path(input).stem().string();
    const auto col = [&](const std::string& name) {
      const int c = table.column(name);
      std::vector<double> v;
      if (c >= 0)
        for (const auto& row : table.rows) v.push_back(row[c]);
      return v;
    };
    if (table.column("px_ref") >= 0) {
      write_text_file(output_path(out_dir, stem + "_error.svg"),
                      svg_line_plot("tracking error", "t (s)", "error (m)", {{"position error", col("t"), col("error")}}));
      NumericTable path;
      path.header = {"t", "x", "y", "r"};
      const int ct = table.column("t"), cx = table.column("px"), cy = table.column("py"), cr = table.column("r");
      for (const auto& row : table.rows) path.rows.push_back({row[ct], row[cx], row[cy], row[cr]});
      write_text_file(output_path(out_dir, stem + "_path.svg"), svg_path_plot("flown path", path));
    } else if (table.column("x") >= 0 && table.column("y") >= 0) {
      write_text_file(output_path(out_dir, stem + "_path.svg"), svg_path_plot("path and footprint", table));
      if (table.column("r") >= 0)
        write_text_file(output_path(out_dir, stem + "_radius.svg"),
                        svg_line_plot("radius", "t (s)", "r (m)", {{"r", col("t"), col("r")}}));
      if (table.column("vx") >= 0) {
        const auto vx = col("vx"), vy = col("vy"), vz = col("vz");
        std::vector<double> speed(vx.size());
        for (std::size_t i = 0; i < vx.size(); ++i)
          speed[i] = std::sqrt(vx[i] * vx[i] + vy[i] * vy[i] + (vz.empty() ? 0.0 : vz[i] * vz[i]));
        write_text_file(output_path(out_dir, stem + "_speed.svg"),
                        svg_line_plot("speed", "t (s)", "|v| (m/s)", {{"speed", col("t"), speed}}));
      }
    } else {
      throw ParseError(fmt::format("{}: neither a trajectory nor a tracking log", input));
    }
  }
  return kOk;
}

int cmd_reference(const std::string& out_dir, double speed, double height) {
  const PiecewiseTrajectory traj = figure_eight(1.5, 0.75, speed, height, VehicleParams{}.r_max);
  write_text_file(output_path(out_dir, "figure_eight.csv"), render([&](std::ostream& o) { traj.write_samples_csv(o); }));
  write_text_file(output_path(out_dir, "figure_eight.coeffs"),
                  render([&](std::ostream& o) { traj.write_coefficients(o); }));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shape-adaptive planning and tracking for a morphing quadrotor"};
  app.require_subcommand(1);

  std::string scenario, traj, out_dir = ".", mode;
  std::vector<std::string> inputs;
  int jobs = 1;
  bool compare = false;
  double speed = 1.5, height = 1.0;

  auto* plan = app.add_subcommand("plan", "search and optimize a scenario");
  plan->add_option("scenario", scenario, "scenario JSON")->required();
  plan->add_option("-o,--output", out_dir, "output directory");
  plan->add_option("--mode", mode, "override the scenario mode (adaptive, fixed-max, fixed-min)");

  auto* sim = app.add_subcommand("simulate", "track a trajectory in closed loop");
  sim->add_option("scenario", scenario, "scenario JSON")->required();
  sim->add_option("trajectory", traj, "trajectory CSV or coefficient dump")->required();
  sim->add_option("-o,--output", out_dir, "output directory");
  sim->add_flag("--compare", compare, "also run with compensation disabled and report the RMSE ratio");

  auto* bench = app.add_subcommand("benchmark", "compare adaptive and fixed-size modes over the seed list");
  bench->add_option("scenario", scenario, "scenario JSON")->required();
  bench->add_option("-o,--output", out_dir, "output directory");
  bench->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* plot = app.add_subcommand("plot", "render trajectories and tracking logs as SVG");
  plot->add_option("inputs", inputs, "trajectory CSVs or tracking logs")->required();
  plot->add_option("-o,--output", out_dir, "output directory");

  auto* ref = app.add_subcommand("reference", "write the figure-eight tracking reference");
  ref->add_option("-o,--output", out_dir, "output directory");
  ref->add_option("--speed", speed, "peak speed (m/s)");
  ref->add_option("--height", height, "flight height (m)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kParse;
  }

  try {
    if (plan->parsed()) return cmd_plan(scenario, out_dir, mode);
    if (sim->parsed()) return cmd_simulate(scenario, traj, out_dir, compare);
    if (bench->parsed()) return cmd_benchmark(scenario, out_dir, jobs);
    if (plot->parsed()) return cmd_plot(inputs, out_dir);
    if (ref->parsed()) return cmd_reference(out_dir, speed, height);
  } catch (const ScenarioError& e) {
    logger().error("{}", e.what());
    return kParse;
  } catch (const ParseError& e) {
    logger().error("{}", e.what());
    return kParse;
  } catch (const SearchError& e) {
    logger().error("no path: {}", e.what());
    return kNoPath;
  } catch (const OptimizationError& e) {
    logger().error("{}", e.what());
    return e.kind() == OptimizationError::Kind::kVerificationFailed ? kVerification : kOptimization;
  } catch (const SimulationError& e) {
    logger().error("simulation failed: {}", e.what());
    return kSimulation;
  } catch (const std::exception& e) {
    logger().error("{}", e.what());
    return kParse;
  }
  return kOk;
}
