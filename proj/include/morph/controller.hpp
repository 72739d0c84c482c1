#pragma once

#include "morph/dynamics_sim.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <vector>

namespace morph {

using Vec4 = Eigen::Vector4d;

struct ControlInput {
  double thrust = 0.0;         // collective, N
  Vec3 torque = Vec3::Zero();  // body frame, N m
};

/// One horizon knot of the tracking reference.
struct ReferencePoint {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 omega = Vec3::Zero();
  ControlInput u;
  double r = 0.211;
};

struct NmpcConfig {
  int horizon = 20;
  double dt = 0.05;
  Vec3 q_p{300.0, 300.0, 400.0};
  Vec3 q_v{30.0, 30.0, 30.0};
  Vec3 q_q{60.0, 60.0, 20.0};
  Vec3 q_w{1.0, 1.0, 1.0};
  double terminal_scale = 5.0;
  Vec4 w_u{0.5, 200.0, 200.0, 200.0};
  Vec4 u_min{0.0, -0.5, -0.5, -0.1};
  Vec4 u_max{24.0, 0.5, 0.5, 0.1};
  int max_iterations = 30;
  double tolerance = 1e-9;

  void validate() const;
};

struct NmpcSolution {
  ControlInput u;
  bool converged = false;
  int iterations = 0;
  double cost = 0.0;
};

/// Successive-linearization tracking NMPC over a disturbance-free rigid-body
/// model. Keeps the last input sequence as a warm start.
class NmpcSolver {
 public:
  explicit NmpcSolver(NmpcConfig config = {});

  const NmpcConfig& config() const { return config_; }
  /// reference.size() must be horizon + 1.
  NmpcSolution solve(const RigidBodyState& x_now, const std::vector<ReferencePoint>& reference,
                     const VehicleParams& model, double r);
  /// Shifts the stored sequence forward by a fraction of one horizon step.
  void shift(double fraction);
  void reset() { warm_.resize(0, 0); }

 private:
  NmpcConfig config_;
  Eigen::MatrixXd warm_;  // 4 x N
};

/// Stateless wrapper: cold-started solve.
NmpcSolution nmpc_solve(const RigidBodyState& x_now, const std::vector<ReferencePoint>& reference,
                        const NmpcConfig& config, const VehicleParams& model, double r);

/// Box-constrained convex QP: min 0.5 x'Hx + g'x, lo <= x <= hi, by primal active set.
Eigen::VectorXd box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, int max_iterations = 500);

// ---------------------------------------------------------------------------
// Filters

/// Componentwise first-order low-pass, discretized at fixed dt.
class LowPass3 {
 public:
  LowPass3(double cutoff_hz, double dt);
  const Vec3& update(const Vec3& x);
  const Vec3& value() const { return y_; }
  void reset() { y_.setZero(); }

 private:
  double alpha_;
  Vec3 y_ = Vec3::Zero();
};

/// Componentwise second-order Butterworth low-pass (bilinear transform).
class Biquad3 {
 public:
  Biquad3(double cutoff_hz, double dt);
  const Vec3& update(const Vec3& x);
  const Vec3& value() const { return y_; }
  void reset();

 private:
  double b0_, b1_, b2_, a1_, a2_;
  Vec3 x1_ = Vec3::Zero(), x2_ = Vec3::Zero(), y1_ = Vec3::Zero(), y2_ = Vec3::Zero();
  Vec3 y_ = Vec3::Zero();
};

struct DisturbanceEstimate {
  Vec3 force = Vec3::Zero();         // F_ext, world frame, filtered
  Vec3 torque = Vec3::Zero();        // tau_f, filtered applied torque
  Vec3 angular_accel = Vec3::Zero();  // filtered body angular acceleration
};

/// Unfiltered F_ext = m a - m g - F z_B with g = (0, 0, -9.81).
Vec3 external_force_raw(double mass, const Vec3& a_meas, double thrust, const Vec3& z_b);
/// Filtered estimate; updates the filter state.
Vec3 estimate_external_force(double mass, const Vec3& a_meas, double thrust, const Vec3& z_b, LowPass3& filter);

/// ||F_u z_B - F_ext||.
double compensate_thrust(double thrust, const Vec3& z_b, const Vec3& f_ext);

/// tau_f + J (J^-1 (tau_u - w x J w) - wdot_f).
Vec3 indi_torque(const Vec3& tau_u, const Vec3& omega, const Mat3& inertia, const Vec3& tau_f, const Vec3& wdot_f);

struct Allocation {
  Vec4 thrusts = Vec4::Zero();
  bool clamped = false;
  double torque_scale = 1.0;
};

/// Solves H t = [F, tau]; on saturation keeps F and shrinks tau uniformly.
Allocation allocate(double thrust, const Vec3& torque, const Mat4& h, double t_min, double t_max);

/// (rho(r_des) - theta) / gamma, limited to |rate_max|.
double servo_command(double r_des, double theta, const VehicleParams& params);

}  // namespace morph
