#pragma once

#include "morph/esdf_map.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace morph {

using Vec4 = Eigen::Vector4d;

/// Search state [p, r, v, v_r]: centroid position and deformable radius with
/// their first derivatives.
struct PlanState {
  Vec3 p = Vec3::Zero();
  double r = 0.0;
  Vec3 v = Vec3::Zero();
  double v_r = 0.0;

  Vec4 position4() const { return Vec4(p.x(), p.y(), p.z(), r); }
  Vec4 velocity4() const { return Vec4(v.x(), v.y(), v.z(), v_r); }
  static PlanState from4(const Vec4& pos, const Vec4& vel);
};

struct SearchConfig {
  Vec4 u_max = Vec4(2.0, 2.0, 1.0, 0.4);
  double dt_min = 0.3;
  double dt_max = 0.6;
  int input_samples = 3;     // per axis, odd
  int duration_samples = 3;  // >= 1
  double v_max = 2.0;
  double omega_max = 0.3;  // radius-rate bound |v_r|
  double margin = 0.05;    // D_margin
  double a = 10.0;         // radius regularization weight
  double w_t = 1.0;        // time weight
  double r_min = 0.131;
  double r_max = 0.211;
  double position_resolution = 0.1;
  double radius_resolution = 0.01;
  std::int64_t node_budget = 200000;
  double goal_position_tolerance = 0.2;
  double goal_radius_tolerance = 0.05;
  /// Negative disables the terminal velocity check.
  double goal_velocity_tolerance = -1.0;
  /// Radius frozen: u_r sampled only at 0 (fixed-size baselines, payload mode).
  bool freeze_radius = false;
  bool use_heuristic = true;
  /// Try the analytic heuristic spline as a goal shot from nodes within this
  /// distance; <= 0 disables.
  double one_shot_distance = 0.0;

  void validate() const;
};

/// One link of a search result: this state was reached from the previous one
/// by applying `u` for `dt`. The first element has dt = 0.
struct PathSegment {
  PlanState state;
  Vec4 u = Vec4::Zero();
  double dt = 0.0;
};

struct SearchResult {
  std::vector<PathSegment> path;
  double cost = 0.0;
  std::int64_t expanded = 0;
  /// Instances where h(start) exceeded the returned cost (logged, never hidden).
  bool heuristic_exceeded_cost = false;
};

enum class SearchFailure { kNoPath, kNodeBudgetExceeded, kInvalidStart, kInvalidGoal };

const char* to_string(SearchFailure failure);

class SearchError : public std::runtime_error {
 public:
  SearchError(SearchFailure failure, const std::string& what) : std::runtime_error(what), failure_(failure) {}
  SearchFailure failure() const { return failure_; }

 private:
  SearchFailure failure_;
};

/// X' = A X + B u for the double integrator over duration dt on all four axes.
PlanState propagate(const PlanState& state, const Vec4& u, double dt);

/// ||u||^2 dt + a ((r_end - r_max)/r_max)^2 dt + w_T dt.
double primitive_cost(const Vec4& u, double r_end, double dt, const SearchConfig& config);

/// Bounds plus whole-body clearance at level attitude. Out-of-map is invalid.
bool is_valid(const PlanState& state, const EsdfField& field, const BodyGeometry& body, const SearchConfig& config);

/// Closed-form minimum of sum over axes of the minimum-effort cubic connection
/// cost plus w_T T, minimized over T > 0 (via the quartic stationarity condition).
double heuristic(const PlanState& state, const PlanState& goal, const SearchConfig& config);

/// Same, also returning the minimizing duration (0 for state == goal).
double heuristic(const PlanState& state, const PlanState& goal, const SearchConfig& config, double* best_time);

/// Evaluates the cubic connection used by the heuristic at time t in [0, T].
PlanState cubic_connection(const PlanState& from, const PlanState& to, double duration, double t);

/// Sampled input and duration sets per the config.
std::vector<Vec4> sample_inputs(const SearchConfig& config);
std::vector<double> sample_durations(const SearchConfig& config);

/// Best-first search over sampled motion primitives. Throws SearchError.
SearchResult search(const PlanState& start, const PlanState& goal, const EsdfField& field, const BodyGeometry& body,
                    const SearchConfig& config);

/// CSV with columns t,x,y,z,r,vx,vy,vz,vr,ux,uy,uz,ur (u is the input that led
/// into the row's state).
void write_search_csv(const SearchResult& result, std::ostream& out);

}  // namespace morph
