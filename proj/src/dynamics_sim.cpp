#include "morph/dynamics_sim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace morph {

void VehicleParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("mass must be positive");
  if (!(k_t > 0.0) || !(k_c > 0.0)) throw std::invalid_argument("thrust/torque coefficients must be positive");
  if (!(central_fraction >= 0.0 && central_fraction < 1.0)) throw std::invalid_argument("central fraction in [0,1)");
  if (!(t_min >= 0.0) || !(t_max > t_min)) throw std::invalid_argument("invalid rotor thrust limits");
  if (!(r_min > 0.0) || !(r_max > r_min)) throw std::invalid_argument("invalid radius range");
  if (!(servo_gamma > 0.0)) throw std::invalid_argument("servo time constant must be positive");
}

Vec3 VehicleParams::motor_position(int j, double r) const {
  static constexpr double sx[4] = {1.0, -1.0, -1.0, 1.0};
  static constexpr double sy[4] = {1.0, 1.0, -1.0, -1.0};
  const double a = r * std::numbers::sqrt2 / 2.0;
  return {sx[j] * a, sy[j] * a, 0.0};
}

double VehicleParams::rho(double r) const { return std::numbers::pi * (r - r_min) / (r_max - r_min); }

double VehicleParams::rho_inverse(double theta) const {
  return r_min + (r_max - r_min) * theta / std::numbers::pi;
}

namespace {

void check_radius(const VehicleParams& params, double r) {
  if (!(r >= params.r_min - 1e-12 && r <= params.r_max + 1e-12))
    throw std::domain_error(fmt::format("radius {} outside [{}, {}]", r, params.r_min, params.r_max));
}

}  // namespace

Mat4 allocation_matrix(const VehicleParams& params, double r) {
  check_radius(params, r);
  Mat4 h;
  const double ratio = params.k_c / params.k_t;
  for (int j = 0; j < 4; ++j) {
    const Vec3 l = params.motor_position(j, r);
    // l x (t e_z) = t (l_y, -l_x, 0)
    h(0, j) = 1.0;
    h(1, j) = l.y();
    h(2, j) = -l.x();
    h(3, j) = params.spin[j] * ratio;
  }
  return h;
}

Mat3 inertia_of(const VehicleParams& params, double r) {
  const double mc = params.central_fraction * params.mass;
  const double rc = params.central_radius, hc = params.central_height;
  Mat3 j = Mat3::Zero();
  j(0, 0) = j(1, 1) = mc * (3.0 * rc * rc + hc * hc) / 12.0;
  j(2, 2) = mc * rc * rc / 2.0;
  const double mp = (1.0 - params.central_fraction) * params.mass / 4.0;
  for (int k = 0; k < 4; ++k) {
    const Vec3 l = params.motor_position(k, r);
    j += mp * (l.squaredNorm() * Mat3::Identity() - l * l.transpose());
  }
  return j;
}

double power(double thrust, double r, double r_max, double c1, double c2) {
  const double e = (r - r_max) / r_max;
  return c1 * std::pow(std::max(thrust, 0.0), 1.5) + c2 * e * e;
}

StateDerivative rigid_body_derivative(const VehicleParams& params, const Vec3& v, const Quat& q, const Vec3& omega,
                                      double collective, const Vec3& torque, const Wrench& disturbance,
                                      const Mat3& inertia) {
  StateDerivative d;
  d.dp = v;
  const Vec3 z_b = q * Vec3::UnitZ();
  d.dv = (collective * z_b + disturbance.force) / params.mass - kGravity * Vec3::UnitZ();
  // q_dot = 0.5 q (x) [0, omega]
  const Quat w_q(0.0, omega.x(), omega.y(), omega.z());
  const Quat prod = q * w_q;
  d.dq = 0.5 * Eigen::Vector4d(prod.w(), prod.x(), prod.y(), prod.z());
  d.domega = inertia.ldlt().solve(torque - omega.cross(inertia * omega) + disturbance.torque);
  return d;
}

RigidBodyState step(const VehicleParams& params, const RigidBodyState& state, const Eigen::Vector4d& thrusts,
                    double servo_rate, const Wrench& disturbance, double dt, StepInfo* info) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive and finite");
  if (!thrusts.allFinite() || !std::isfinite(servo_rate) || !disturbance.force.allFinite() ||
      !disturbance.torque.allFinite())
    throw std::invalid_argument("non-finite simulator input");

  Eigen::Vector4d t = thrusts.cwiseMax(params.t_min).cwiseMin(params.t_max);
  if (info != nullptr) {
    info->thrust_clamped = (t != thrusts);
    info->applied = t;
  }

  const Mat4 h = allocation_matrix(params, std::clamp(state.r, params.r_min, params.r_max));
  const Eigen::Vector4d wrench = h * t;
  const double collective = wrench[0];
  const Vec3 torque = wrench.tail<3>();
  const Mat3 inertia = inertia_of(params, state.r);

  struct X {
    Vec3 p, v;
    Eigen::Vector4d q;
    Vec3 w;
  };
  const auto f = [&](const X& x) {
    const Quat q(x.q[0], x.q[1], x.q[2], x.q[3]);
    return rigid_body_derivative(params, x.v, q, x.w, collective, torque, disturbance, inertia);
  };
  const auto add = [](const X& x, const StateDerivative& d, double s) {
    return X{x.p + s * d.dp, x.v + s * d.dv, x.q + s * d.dq, x.w + s * d.domega};
  };

  const X x0{state.p, state.v, Eigen::Vector4d(state.q.w(), state.q.x(), state.q.y(), state.q.z()), state.omega};
  const StateDerivative k1 = f(x0);
  const StateDerivative k2 = f(add(x0, k1, 0.5 * dt));
  const StateDerivative k3 = f(add(x0, k2, 0.5 * dt));
  const StateDerivative k4 = f(add(x0, k3, dt));

  RigidBodyState out = state;
  out.p = state.p + dt / 6.0 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
  out.v = state.v + dt / 6.0 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  Eigen::Vector4d q = x0.q + dt / 6.0 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
  q.normalize();
  out.q = Quat(q[0], q[1], q[2], q[3]);
  out.omega = state.omega + dt / 6.0 * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega);

  out.theta = std::clamp(state.theta + servo_rate * dt, 0.0, std::numbers::pi);
  out.r = std::clamp(params.rho_inverse(out.theta), params.r_min, params.r_max);
  return out;
}

// ---------------------------------------------------------------------------

DisturbanceGenerator::DisturbanceGenerator(const DisturbanceProfile& profile) : profile_(profile), rng_(profile.seed) {}

Wrench DisturbanceGenerator::next(double t, double dt) {
  Wrench w;
  const double since = t - profile_.start_time;
  switch (profile_.kind) {
    case DisturbanceProfile::Kind::kNone:
      break;
    case DisturbanceProfile::Kind::kConstant:
      if (since >= 0.0) w = profile_.value;
      break;
    case DisturbanceProfile::Kind::kRamp:
      if (since >= 0.0) {
        const double s = profile_.ramp_duration > 0.0 ? std::min(1.0, since / profile_.ramp_duration) : 1.0;
        w.force = s * profile_.value.force;
        w.torque = s * profile_.value.torque;
      }
      break;
  }
  if (profile_.noise_force_std > 0.0 || profile_.noise_torque_std > 0.0) {
    // Discrete first-order Gauss-Markov process with stationary std as configured.
    const double a = std::exp(-2.0 * std::numbers::pi * profile_.noise_bandwidth_hz * dt);
    const double b = std::sqrt(1.0 - a * a);
    for (int i = 0; i < 3; ++i) noise_force_[i] = a * noise_force_[i] + b * profile_.noise_force_std * normal_(rng_);
    for (int i = 0; i < 3; ++i)
      noise_torque_[i] = a * noise_torque_[i] + b * profile_.noise_torque_std * normal_(rng_);
    w.force += noise_force_;
    w.torque += noise_torque_;
  }
  return w;
}

void write_state_log(const std::vector<StateLogRow>& rows, std::ostream& out) {
  out << "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,r,theta,t1,t2,t3,t4,fx,fy,fz,mx,my,mz\n";
  for (const auto& row : rows) {
    const auto& s = row.state;
    out << fmt::format("{:.6f},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},", row.t, s.p.x(),
                       s.p.y(), s.p.z(), s.v.x(), s.v.y(), s.v.z(), s.q.w(), s.q.x(), s.q.y(), s.q.z());
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},", s.omega.x(), s.omega.y(), s.omega.z(), s.r, s.theta);
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},", row.thrusts[0], row.thrusts[1], row.thrusts[2],
                       row.thrusts[3]);
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", row.disturbance.force.x(),
                       row.disturbance.force.y(), row.disturbance.force.z(), row.disturbance.torque.x(),
                       row.disturbance.torque.y(), row.disturbance.torque.z());
  }
}

}  // namespace morph
