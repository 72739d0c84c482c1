#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

namespace morph {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

inline constexpr double kGravity = 9.81;

struct VehicleParams {
  double mass = 1.0;
  double central_fraction = 0.6;
  double central_radius = 0.08;  // solid cylinder
  double central_height = 0.05;
  double k_t = 1.0;
  double k_c = 0.016;
  std::array<int, 4> spin = {1, -1, 1, -1};
  double r_min = 0.131;
  double r_max = 0.211;
  double height = 0.1;
  double t_min = 0.0;
  double t_max = 6.0;
  double servo_gamma = 0.1;  // s
  double servo_rate_max = 20.0;  // rad/s

  void validate() const;

  /// Body-frame position of motor j at radius r (X layout, arms scale with r).
  Vec3 motor_position(int j, double r) const;
  /// Servo angle for radius r: affine [r_min, r_max] -> [0, pi].
  double rho(double r) const;
  double rho_inverse(double theta) const;
};

struct RigidBodyState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Quat q = Quat::Identity();  // world <- body
  Vec3 omega = Vec3::Zero();  // body frame
  double r = 0.211;
  double theta = 0.0;
};

struct Wrench {
  Vec3 force = Vec3::Zero();   // world frame
  Vec3 torque = Vec3::Zero();  // body frame
};

/// Rows: collective thrust, body torque x/y/z; columns: rotors.
Mat4 allocation_matrix(const VehicleParams& params, double r);
Mat3 inertia_of(const VehicleParams& params, double r);

double power(double thrust, double r, double r_max, double c1 = 1.0, double c2 = 1.0);

struct StepInfo {
  bool thrust_clamped = false;
  Eigen::Vector4d applied = Eigen::Vector4d::Zero();
};

/// One RK4 step with rotor thrusts and servo rate held over dt.
RigidBodyState step(const VehicleParams& params, const RigidBodyState& state, const Eigen::Vector4d& thrusts,
                    double servo_rate, const Wrench& disturbance, double dt, StepInfo* info = nullptr);

/// Time derivative used by step(); r and its inertia are taken as given.
struct StateDerivative {
  Vec3 dp, dv;
  Eigen::Vector4d dq;  // (w, x, y, z)
  Vec3 domega;
};
StateDerivative rigid_body_derivative(const VehicleParams& params, const Vec3& v, const Quat& q, const Vec3& omega,
                                      double collective, const Vec3& torque, const Wrench& disturbance,
                                      const Mat3& inertia);

// ---------------------------------------------------------------------------

struct DisturbanceProfile {
  enum class Kind { kNone, kConstant, kRamp };
  Kind kind = Kind::kNone;
  Wrench value;
  double start_time = 0.0;
  double ramp_duration = 1.0;
  /// First-order band-limited Gaussian noise added on top.
  double noise_force_std = 0.0;
  double noise_torque_std = 0.0;
  double noise_bandwidth_hz = 2.0;
  std::uint64_t seed = 0;
};

class DisturbanceGenerator {
 public:
  explicit DisturbanceGenerator(const DisturbanceProfile& profile);
  /// Wrench at time t; advances the noise state by dt. Call once per step, in order.
  Wrench next(double t, double dt);

 private:
  DisturbanceProfile profile_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Vec3 noise_force_ = Vec3::Zero();
  Vec3 noise_torque_ = Vec3::Zero();
};

struct StateLogRow {
  double t = 0.0;
  RigidBodyState state;
  Eigen::Vector4d thrusts = Eigen::Vector4d::Zero();
  Wrench disturbance;
};

/// t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,r,theta,t1..t4,fx,fy,fz,mx,my,mz
void write_state_log(const std::vector<StateLogRow>& rows, std::ostream& out);

}  // namespace morph
