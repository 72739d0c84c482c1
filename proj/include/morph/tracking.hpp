#pragma once

#include "morph/controller.hpp"
#include "morph/dynamics_sim.hpp"
#include "morph/trajectory.hpp"

#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace morph {

/// Reference state and inputs from the flat outputs at time t (yaw fixed to
/// zero). t is clamped to the trajectory span.
ReferencePoint flat_reference(const PiecewiseTrajectory& traj, double t, const VehicleParams& params);

/// Thrust direction and magnitude for a world acceleration.
double reference_thrust(const Vec3& accel, double mass, Vec3* z_b = nullptr);

/// Lissajous figure-eight x = A sin(wt), y = B sin(2wt) at constant height,
/// with w chosen so the peak speed equals peak_speed. Built as a minimum-jerk
/// piecewise trajectory through samples of the curve.
PiecewiseTrajectory figure_eight(double a, double b, double peak_speed, double height, double radius, int loops = 1,
                                 int pieces_per_loop = 48);

/// Rest trajectory at a fixed point.
PiecewiseTrajectory hover_trajectory(const Vec3& p, double radius, double duration);

/// Minimal world-frame rotation taking the reference total-force direction
/// onto the thrust direction that cancels f_ext.
Quat compensation_tilt(const ReferencePoint& ref, const Vec3& f_ext);

struct TrackingConfig {
  VehicleParams vehicle;
  NmpcConfig nmpc;
  double sim_dt = 0.002;
  int nmpc_decimation = 5;  // sim steps per NMPC solve
  bool force_compensation = true;
  bool indi = true;
  double force_cutoff_hz = 5.0;
  double indi_cutoff_hz = 20.0;
  DisturbanceProfile disturbance;
  double accel_noise_std = 0.0;
  double gyro_noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrackingLogRow {
  double t = 0.0;
  Vec3 p_ref = Vec3::Zero();
  Vec3 v_ref = Vec3::Zero();
  double r_ref = 0.0;
  RigidBodyState state;
  Vec3 f_ext = Vec3::Zero();
  double thrust_cmd = 0.0;
  Vec3 torque_cmd = Vec3::Zero();
  Vec4 thrusts = Vec4::Zero();
  Wrench disturbance;
  double error = 0.0;
};

struct TrackingResult {
  std::vector<TrackingLogRow> log;
  double rmse = 0.0;
  double max_error = 0.0;
  int nmpc_unconverged = 0;
  int allocation_clamps = 0;
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(double t, const std::string& what);
  double time() const { return time_; }

 private:
  double time_;
};

/// Closed-loop run: NMPC at the decimated rate, estimation, thrust
/// compensation, INDI and allocation at the simulation rate.
TrackingResult run_tracking(const PiecewiseTrajectory& traj, const TrackingConfig& config);

/// t, reference, state, F_ext estimate, commands, rotor thrusts, error.
void write_tracking_log(const TrackingResult& result, std::ostream& out);

}  // namespace morph
