#pragma once

#include "morph/esdf_map.hpp"
#include "morph/kinodynamic_search.hpp"
#include "morph/lbfgs.hpp"
#include "morph/minco.hpp"
#include "morph/trajectory.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace morph {

enum class RadiusMode { kFree, kFrozen };

struct PenaltyWeights {
  double clearance = 1e4;
  double dynamics = 1e3;
};

struct OptProblem {
  const EsdfField* field = nullptr;
  BodyGeometry body;
  BoundaryState head = BoundaryState::Zero();
  BoundaryState tail = BoundaryState::Zero();
  double v_max = 2.0;
  double a_max = 3.0;
  double omega_max = 0.3;  // |dr/dt| bound
  double alpha_max = 1.0;  // |d2r/dt2| bound
  double margin = 0.05;
  double a = 10.0;
  double w_t = 1.0;
  PenaltyWeights weights;
  int samples_per_piece = 16;  // kappa, even
  RadiusMode radius_mode = RadiusMode::kFree;

  /// Penalty targets are tightened by these amounts so that the cubic hinge
  /// equilibrium lands inside the verified constraint set.
  double clearance_buffer = 0.02;
  double dynamics_scale = 0.95;
  double min_piece_duration = 0.1;
  double verify_tolerance = 1e-3;
  LbfgsParams solver;

  void validate() const;
};

struct ConstraintResiduals {
  double velocity = 0.0;  // max(||v|| - v_max), 0 when satisfied
  double acceleration = 0.0;
  double radius_rate = 0.0;
  double radius_accel = 0.0;
  double radius_bounds = 0.0;
  double clearance = 0.0;  // max(margin - clearance)
  double min_clearance = 0.0;
  bool out_of_map = false;

  double worst() const;
};

struct OptReport {
  double pce = 0.0;
  double rce = 0.0;
  double sorr = 0.0;           // unweighted integral
  double sorr_weighted = 0.0;  // a * sorr
  double time = 0.0;           // total duration T
  double time_cost = 0.0;      // w_T * T
  double penalty = 0.0;        // penalty sum at the solution
  double total = 0.0;          // pce + rce + a sorr + w_T T
  double objective = 0.0;      // total + penalty (with the final weights)
  ConstraintResiduals residuals;
  int iterations = 0;
  int escalations = 0;
  bool converged = false;
  std::string status;
  std::vector<double> history;
};

class OptimizationError : public std::runtime_error {
 public:
  enum class Kind { kSeedTooShort, kVerificationFailed };
  OptimizationError(Kind kind, const std::string& what, OptReport report = {})
      : std::runtime_error(what), kind_(kind), report_(std::move(report)) {}
  Kind kind() const { return kind_; }
  const OptReport& report() const { return report_; }

 private:
  Kind kind_;
  OptReport report_;
};

/// Decision-variable layout of the unconstrained problem: interior waypoints
/// (radius row included only in free mode) followed by tau_i = log(T_i).
class TrajectoryObjective {
 public:
  TrajectoryObjective(const OptProblem& problem, int pieces);

  int pieces() const { return pieces_; }
  int dimension() const { return waypoint_rows_ * (pieces_ - 1) + pieces_; }

  Eigen::VectorXd pack(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations) const;
  void unpack(const Eigen::VectorXd& x, Eigen::Matrix4Xd& waypoints, Eigen::VectorXd& durations) const;

  /// Full penalized objective and its gradient wrt x.
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& grad);
  /// Same with respect to waypoints and durations directly (no time map).
  double evaluate_direct(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations,
                         Eigen::Matrix4Xd& grad_waypoints, Eigen::VectorXd& grad_durations);

  /// Cost terms of the last evaluation.
  const OptReport& terms() const { return terms_; }
  const MincoJerk& minco() const { return minco_; }
  void set_weights(const PenaltyWeights& w) { problem_.weights = w; }
  const OptProblem& problem() const { return problem_; }

 private:
  OptProblem problem_;
  int pieces_;
  int waypoint_rows_;
  double frozen_radius_;
  MincoJerk minco_;
  OptReport terms_;
  std::vector<Vec3> lateral_dirs_;
  std::vector<Vec3> lateral_offsets_unit_;  // (0, 0, z) parts
};

/// Penalty-free cost terms of a trajectory (κ-point Simpson SORR, exact jerk energy).
OptReport evaluate_costs(const PiecewiseTrajectory& traj, const OptProblem& problem);

/// Dense sweep (4κ samples per piece) of all inequality constraints.
ConstraintResiduals verify_constraints(const PiecewiseTrajectory& traj, const OptProblem& problem,
                                       int samples_per_piece);

/// Seed pieces from a search path: waypoints at primitive ends, merging
/// primitives shorter than the minimum duration into their successor.
void seed_from_path(const std::vector<PathSegment>& path, const OptProblem& problem, Eigen::Matrix4Xd& waypoints,
                    Eigen::VectorXd& durations);

struct OptResult {
  PiecewiseTrajectory trajectory;
  OptReport report;
};

/// Warm-started quasi-Newton refinement of a search path. Throws OptimizationError.
OptResult optimize(const std::vector<PathSegment>& seed, const OptProblem& problem);
/// Same from explicit initial waypoints and durations.
OptResult optimize_from(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations,
                        const OptProblem& problem);

/// Payload bounding box in the body frame.
struct PayloadBox {
  Vec3 size = Vec3::Zero();    // length, width, height (m)
  Vec3 offset = Vec3::Zero();  // box center in the body frame (m)
};

/// Box surface points at the body's angular/axial sampling density.
std::vector<Vec3> sample_box_surface(const PayloadBox& box, double lateral_spacing, double axial_spacing);

/// Freezes the radius and appends the sampled payload surface to the body.
OptProblem attach_payload(const OptProblem& problem, const PayloadBox& box);

}  // namespace morph
