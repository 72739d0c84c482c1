#include "morph/tracking.hpp"

#include "morph/log.hpp"
#include "morph/minco.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

namespace morph {

double reference_thrust(const Vec3& accel, double mass, Vec3* z_b) {
  const Vec3 f = mass * (accel + kGravity * Vec3::UnitZ());
  const double n = f.norm();
  if (z_b != nullptr) *z_b = n > 0.0 ? Vec3(f / n) : Vec3::UnitZ();
  return n;
}

namespace {

struct FlatAttitude {
  Mat3 rotation;
  Vec3 omega;
  double thrust;
};

FlatAttitude flat_attitude(const PiecewiseTrajectory& traj, double t, double mass) {
  const double tc = std::clamp(t, 0.0, traj.total_duration());
  const Vec3 a = traj.eval(tc, 2).head<3>();
  const Vec3 j = traj.eval(tc, 3).head<3>();
  FlatAttitude out;
  Vec3 z;
  out.thrust = reference_thrust(a, mass, &z);
  const Vec3 y = z.cross(Vec3::UnitX()).normalized();
  const Vec3 x = y.cross(z);
  out.rotation.col(0) = x;
  out.rotation.col(1) = y;
  out.rotation.col(2) = z;
  // Past the end the reference is held, so its rates vanish.
  const Vec3 hw = (t > traj.total_duration() || t < 0.0) ? Vec3::Zero() : Vec3(mass / out.thrust * (j - z.dot(j) * z));
  out.omega = Vec3(-hw.dot(y), hw.dot(x), 0.0);
  return out;
}

}  // namespace

ReferencePoint flat_reference(const PiecewiseTrajectory& traj, double t, const VehicleParams& params) {
  const double total = traj.total_duration();
  const double tc = std::clamp(t, 0.0, total);
  const Vec4 s0 = traj.eval(tc, 0);
  ReferencePoint ref;
  ref.p = s0.head<3>();
  ref.v = t > total ? Vec3::Zero() : Vec3(traj.eval(tc, 1).head<3>());
  ref.r = std::clamp(s0[3], params.r_min, params.r_max);
  const FlatAttitude att = flat_attitude(traj, t, params.mass);
  ref.q = Quat(att.rotation).normalized();
  ref.omega = att.omega;

  constexpr double eps = 1e-4;
  const double t0 = std::max(0.0, t - eps), t1 = std::min(std::max(total, t), t + eps);
  Vec3 wdot = Vec3::Zero();
  if (t1 > t0) wdot = (flat_attitude(traj, t1, params.mass).omega - flat_attitude(traj, t0, params.mass).omega) / (t1 - t0);
  const Mat3 inertia = inertia_of(params, ref.r);
  ref.u.thrust = att.thrust;
  ref.u.torque = inertia * wdot + ref.omega.cross(inertia * ref.omega);
  return ref;
}

PiecewiseTrajectory figure_eight(double a, double b, double peak_speed, double height, double radius, int loops,
                                 int pieces_per_loop) {
  if (!(peak_speed > 0.0) || loops < 1 || pieces_per_loop < 4)
    throw std::invalid_argument("figure-eight needs positive speed and at least one loop");
  const double w = peak_speed / std::sqrt(a * a + 4.0 * b * b);
  const double period = 2.0 * std::numbers::pi / w;
  const int m = loops * pieces_per_loop;
  const double dt = period / pieces_per_loop;
  Eigen::Matrix4Xd q(4, m - 1);
  for (int i = 1; i < m; ++i) {
    const double t = i * dt;
    q.col(i - 1) << a * std::sin(w * t), b * std::sin(2.0 * w * t), height, radius;
  }
  BoundaryState head = BoundaryState::Zero();
  head.col(0) << 0.0, 0.0, height, radius;
  head.col(1) << a * w, 2.0 * b * w, 0.0, 0.0;
  const BoundaryState tail = head;
  return minco_construct(q, Eigen::VectorXd::Constant(m, dt), head, tail);
}

PiecewiseTrajectory hover_trajectory(const Vec3& p, double radius, double duration) {
  BoundaryState s = BoundaryState::Zero();
  s.col(0) << p, radius;
  return minco_construct(Eigen::Matrix4Xd(4, 0), Eigen::VectorXd::Constant(1, duration), s, s);
}

Quat compensation_tilt(const ReferencePoint& ref, const Vec3& f_ext) {
  const Vec3 total = ref.u.thrust * (ref.q * Vec3::UnitZ());
  const Vec3 thrust = total - f_ext;
  if (total.norm() < 1e-9 || thrust.norm() < 1e-9) return Quat::Identity();
  return Quat::FromTwoVectors(total, thrust);
}

void TrackingConfig::validate() const {
  vehicle.validate();
  nmpc.validate();
  if (!(sim_dt > 0.0) || nmpc_decimation < 1) throw std::invalid_argument("invalid simulation rates");
}

SimulationError::SimulationError(double t, const std::string& what)
    : std::runtime_error(fmt::format("t = {:.3f} s: {}", t, what)), time_(t) {}

TrackingResult run_tracking(const PiecewiseTrajectory& traj, const TrackingConfig& config) {
  config.validate();
  const double total = traj.total_duration();
  if (!(total > 0.0)) throw std::invalid_argument("trajectory duration must be positive");
  const VehicleParams& vp = config.vehicle;
  const double dt = config.sim_dt;
  const int n = config.nmpc.horizon;

  RigidBodyState state;
  {
    const ReferencePoint r0 = flat_reference(traj, 0.0, vp);
    state.p = r0.p;
    state.v = r0.v;
    state.q = r0.q;
    state.omega = r0.omega;
    state.r = r0.r;
    state.theta = vp.rho(r0.r);
  }

  NmpcSolver solver(config.nmpc);
  LowPass3 force_filter(config.force_cutoff_hz, dt);
  Biquad3 wdot_filter(config.indi_cutoff_hz, dt);
  Biquad3 tau_filter(config.indi_cutoff_hz, dt);
  DisturbanceGenerator disturbance(config.disturbance);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto noise3 = [&](double sd) {
    if (sd <= 0.0) return Vec3(Vec3::Zero());
    const double x = normal(rng), y = normal(rng), z = normal(rng);
    return Vec3(sd * Vec3(x, y, z));
  };

  TrackingResult result;
  const int steps = static_cast<int>(std::ceil(total / dt - 1e-9));
  result.log.reserve(steps + 1);
  {
    TrackingLogRow row;
    row.p_ref = state.p;
    row.v_ref = state.v;
    row.r_ref = state.r;
    row.state = state;
    result.log.push_back(row);
  }

  ControlInput u;
  Vec3 f_ext = Vec3::Zero();
  Vec3 omega_meas = state.omega;
  std::vector<ReferencePoint> horizon(n + 1);
  double sum_sq = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    try {
      // The NMPC controls a virtual attitude whose thrust axis carries the
      // total force F_u z_B; the airframe is rotated so that its thrust axis
      // points along F_u z_B - F_ext.
      Quat tilt = Quat::Identity();
      if (config.force_compensation) tilt = compensation_tilt(flat_reference(traj, t, vp), f_ext);
      RigidBodyState virtual_state = state;
      virtual_state.q = (tilt.conjugate() * state.q).normalized();
      if (k % config.nmpc_decimation == 0) {
        if (k > 0) solver.shift(config.nmpc_decimation * dt / config.nmpc.dt);
        for (int i = 0; i <= n; ++i) horizon[i] = flat_reference(traj, t + i * config.nmpc.dt, vp);
        const NmpcSolution sol = solver.solve(virtual_state, horizon, vp, state.r);
        if (!sol.converged) ++result.nmpc_unconverged;
        u = sol.u;
      }
      const Vec3 z_b = state.q * Vec3::UnitZ();
      const Vec3 z_virtual = virtual_state.q * Vec3::UnitZ();
      const double thrust = config.force_compensation ? compensate_thrust(u.thrust, z_virtual, f_ext) : u.thrust;
      const Mat4 h = allocation_matrix(vp, state.r);
      const Vec3 torque =
          config.indi ? indi_torque(u.torque, omega_meas, inertia_of(vp, state.r), tau_filter.value(),
                                    wdot_filter.value())
                      : u.torque;
      const Allocation alloc = allocate(thrust, torque, h, vp.t_min, vp.t_max);
      if (alloc.clamped) ++result.allocation_clamps;
      const double r_des = std::clamp(traj.eval(std::min(t, total), 0)[3], vp.r_min, vp.r_max);
      const double servo = servo_command(r_des, state.theta, vp);
      const Wrench w = disturbance.next(t, dt);

      StepInfo info;
      const RigidBodyState next = step(vp, state, alloc.thrusts, servo, w, dt, &info);

      const Vec3 a_meas = (next.v - state.v) / dt + noise3(config.accel_noise_std);
      const Vec3 z_mid = (z_b + next.q * Vec3::UnitZ()).normalized();
      const Vec4 applied = h * info.applied;
      f_ext = estimate_external_force(vp.mass, a_meas, applied[0], z_mid, force_filter);
      const Vec3 omega_next = next.omega + noise3(config.gyro_noise_std);
      wdot_filter.update((omega_next - omega_meas) / dt);
      tau_filter.update(applied.tail<3>());
      omega_meas = omega_next;
      state = next;
      if (!state.p.allFinite() || !state.v.allFinite() || !state.omega.allFinite())
        throw std::runtime_error("state diverged");

      const double t_next = (k + 1) * dt;
      const ReferencePoint ref = flat_reference(traj, t_next, vp);
      TrackingLogRow row;
      row.t = t_next;
      row.p_ref = ref.p;
      row.v_ref = ref.v;
      row.r_ref = ref.r;
      row.state = state;
      row.f_ext = f_ext;
      row.thrust_cmd = thrust;
      row.torque_cmd = torque;
      row.thrusts = info.applied;
      row.disturbance = w;
      row.error = (state.p - ref.p).norm();
      sum_sq += row.error * row.error;
      result.max_error = std::max(result.max_error, row.error);
      result.log.push_back(row);
    } catch (const SimulationError&) {
      throw;
    } catch (const std::exception& e) {
      throw SimulationError(t, e.what());
    }
  }
  result.rmse = std::sqrt(sum_sq / std::max(1, steps));
  if (result.nmpc_unconverged > 0)
    logger().info("NMPC hit the iteration cap on {} of {} solves", result.nmpc_unconverged,
                  (steps + config.nmpc_decimation - 1) / config.nmpc_decimation);
  return result;
}

void write_tracking_log(const TrackingResult& result, std::ostream& out) {
  out << "t,px_ref,py_ref,pz_ref,vx_ref,vy_ref,vz_ref,r_ref,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,r,theta,"
         "fext_x,fext_y,fext_z,thrust_cmd,tau_x,tau_y,tau_z,t1,t2,t3,t4,dist_fx,dist_fy,dist_fz,dist_mx,dist_my,"
         "dist_mz,error\n";
  for (const auto& row : result.log) {
    const auto& s = row.state;
    out << fmt::format("{:.6f},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},", row.t, row.p_ref.x(),
                       row.p_ref.y(), row.p_ref.z(), row.v_ref.x(), row.v_ref.y(), row.v_ref.z(), row.r_ref);
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},", s.p.x(), s.p.y(),
                       s.p.z(), s.v.x(), s.v.y(), s.v.z(), s.q.w(), s.q.x(), s.q.y(), s.q.z());
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},", s.omega.x(), s.omega.y(), s.omega.z(), s.r, s.theta);
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},", row.f_ext.x(), row.f_ext.y(),
                       row.f_ext.z(), row.thrust_cmd, row.torque_cmd.x(), row.torque_cmd.y(), row.torque_cmd.z());
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},", row.thrusts[0], row.thrusts[1], row.thrusts[2],
                       row.thrusts[3]);
    out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", row.disturbance.force.x(),
                       row.disturbance.force.y(), row.disturbance.force.z(), row.disturbance.torque.x(),
                       row.disturbance.torque.y(), row.disturbance.torque.z(), row.error);
  }
}

}  // namespace morph
