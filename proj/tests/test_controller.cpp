#include "morph/controller.hpp"
#include "morph/tracking.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace morph;

namespace {

std::vector<ReferencePoint> hover_reference(const NmpcConfig& cfg, const Vec3& p) {
  ReferencePoint ref;
  ref.p = p;
  ref.u.thrust = kGravity;
  return std::vector<ReferencePoint>(cfg.horizon + 1, ref);
}

RigidBodyState at(const Vec3& p) {
  RigidBodyState s;
  s.p = p;
  s.r = 0.211;
  s.theta = std::numbers::pi;
  return s;
}

// Minimum over every assignment of each coordinate to {lower, upper, free}.
Eigen::VectorXd enumerate_box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
  const int n = static_cast<int>(g.size());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  double best = INFINITY;
  Eigen::VectorXd best_x;
  for (int c = 0; c < combos; ++c) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<int> free;
    int code = c;
    for (int i = 0; i < n; ++i, code /= 3) {
      if (code % 3 == 0) x[i] = lo[i];
      else if (code % 3 == 1) x[i] = hi[i];
      else free.push_back(i);
    }
    if (!free.empty()) {
      const int m = static_cast<int>(free.size());
      Eigen::MatrixXd hf(m, m);
      Eigen::VectorXd rhs(m);
      for (int a = 0; a < m; ++a) {
        rhs[a] = -g[free[a]];
        for (int b = 0; b < n; ++b)
          if (std::find(free.begin(), free.end(), b) == free.end()) rhs[a] -= h(free[a], b) * x[b];
        for (int b = 0; b < m; ++b) hf(a, b) = h(free[a], free[b]);
      }
      const Eigen::VectorXd xf = hf.ldlt().solve(rhs);
      bool feasible = true;
      for (int a = 0; a < m; ++a) {
        x[free[a]] = xf[a];
        feasible = feasible && xf[a] >= lo[free[a]] - 1e-12 && xf[a] <= hi[free[a]] + 1e-12;
      }
      if (!feasible) continue;
    }
    const double f = 0.5 * x.dot(h * x) + g.dot(x);
    if (f < best) {
      best = f;
      best_x = x;
    }
  }
  return best_x;
}

double attitude_angle(const Quat& q) { return 2.0 * std::asin(std::min(1.0, q.vec().norm())); }

double rms_attitude(const TrackingResult& res) {
  double s = 0.0;
  for (const auto& row : res.log) s += std::pow(attitude_angle(row.state.q), 2);
  return std::sqrt(s / res.log.size());
}

}  // namespace

TEST(Estimator, HandValues) {
  EXPECT_EQ(external_force_raw(1.0, Vec3::Zero(), 9.81, Vec3::UnitZ()), Vec3::Zero());
  EXPECT_NEAR((external_force_raw(1.0, Vec3::Zero(), 8.81, Vec3::UnitZ()) - Vec3(0.0, 0.0, 1.0)).norm(), 0.0,
              1e-14);
}

TEST(Estimator, FilterIsFirstOrder) {
  const double dt = 1e-3, fc = 5.0;
  LowPass3 lp(fc, dt);
  const double tau = 1.0 / (2.0 * std::numbers::pi * fc);
  const Vec3 d(1.0, -2.0, 0.5);
  for (int i = 0; i < static_cast<int>(5 * tau / dt); ++i) estimate_external_force(1.0, d, kGravity, Vec3::UnitZ(), lp);
  EXPECT_LT((lp.value() - d).norm(), 0.05 * d.norm());
  EXPECT_GT((lp.value() - d).norm(), 0.0);
}

TEST(Compensation, HandValues) {
  EXPECT_EQ(compensate_thrust(9.81, Vec3::UnitZ(), Vec3::Zero()), 9.81);
  EXPECT_NEAR(compensate_thrust(9.81, Vec3::UnitZ(), Vec3(0.0, 0.0, 1.0)), 8.81, 1e-14);
  EXPECT_NEAR(compensate_thrust(9.81, Vec3::UnitZ(), Vec3(1.0, 0.0, 0.0)), std::sqrt(9.81 * 9.81 + 1.0), 1e-14);
  const Vec3 z = Vec3(0.3, -0.2, 0.9).normalized();
  EXPECT_DOUBLE_EQ(compensate_thrust(7.0, z, Vec3::Zero()), 7.0);
}

TEST(Indi, HandValues) {
  const Mat3 j = 0.01 * Mat3::Identity();
  EXPECT_NEAR((indi_torque(Vec3(0.01, 0, 0), Vec3::Zero(), j, Vec3::Zero(), Vec3::Zero()) - Vec3(0.01, 0, 0)).norm(),
              0.0, 1e-15);
  const Mat3 jg = inertia_of(VehicleParams{}, 0.17);
  const Vec3 tau_u(0.01, -0.02, 0.005), w(1.0, 2.0, -0.5), tau_f(0.3, 0.1, -0.2);
  const Vec3 wdot_d = jg.inverse() * (tau_u - w.cross(jg * w));
  EXPECT_NEAR((indi_torque(tau_u, w, jg, tau_f, wdot_d) - tau_f).norm(), 0.0, 1e-12);
  EXPECT_THROW(indi_torque(tau_u, w, Mat3::Zero(), tau_f, wdot_d), std::invalid_argument);
}

TEST(Allocate, SymmetricSplitAndRoundTrip) {
  VehicleParams p;
  const Mat4 h = allocation_matrix(p, 0.18);
  const Allocation a = allocate(10.0, Vec3::Zero(), h, p.t_min, p.t_max);
  EXPECT_FALSE(a.clamped);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.thrusts[j], 2.5, 1e-14);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double r = p.r_min + (p.r_max - p.r_min) * (0.5 + 0.5 * u(rng));
    const Mat4 hk = allocation_matrix(p, r);
    const double f = 10.0 + 2.0 * u(rng);
    const Vec3 tau(0.05 * u(rng), 0.05 * u(rng), 0.005 * u(rng));
    const Allocation out = allocate(f, tau, hk, p.t_min, p.t_max);
    ASSERT_FALSE(out.clamped);
    EXPECT_LT((hk * out.thrusts - Vec4(f, tau.x(), tau.y(), tau.z())).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Allocate, SaturationKeepsCollective) {
  VehicleParams p;
  const Mat4 h = allocation_matrix(p, 0.15);
  const Allocation a = allocate(12.0, Vec3(2.0, -1.0, 0.3), h, p.t_min, p.t_max);
  EXPECT_TRUE(a.clamped);
  EXPECT_NEAR(a.thrusts.sum(), 12.0, 1e-10);
  EXPECT_LT(a.torque_scale, 1.0);
  EXPECT_GE(a.thrusts.minCoeff(), p.t_min - 1e-12);
  EXPECT_LE(a.thrusts.maxCoeff(), p.t_max + 1e-12);
  Mat4 singular = h;
  singular.col(3) = singular.col(2);
  EXPECT_THROW(allocate(10.0, Vec3::Zero(), singular, 0.0, 6.0), std::invalid_argument);
}

TEST(Servo, HandValues) {
  VehicleParams p;
  const double r_des = p.rho_inverse(1.0);
  EXPECT_NEAR(servo_command(r_des, 0.8, p), 2.0, 1e-12);
  EXPECT_NEAR(servo_command(r_des, 1.0, p), 0.0, 1e-12);
  EXPECT_EQ(servo_command(p.r_max, 0.0, p), p.servo_rate_max);
}

TEST(BoxQp, MatchesActiveSetEnumeration) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const int n = 2 + k % 4;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = u(rng);
    const Eigen::MatrixXd h = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
      g[i] = 3.0 * u(rng);
      lo[i] = -0.5 + 0.3 * u(rng);
      hi[i] = lo[i] + 0.2 + std::abs(u(rng));
    }
    const Eigen::VectorXd x = box_qp(h, g, lo, hi);
    const Eigen::VectorXd ref = enumerate_box_qp(h, g, lo, hi);
    EXPECT_LT((x - ref).cwiseAbs().maxCoeff(), 1e-9) << "instance " << k;
  }
}

TEST(Nmpc, HoverFixedPoint) {
  NmpcConfig cfg;
  const Vec3 p(0.0, 0.0, 1.0);
  const NmpcSolution sol = nmpc_solve(at(p), hover_reference(cfg, p), cfg, VehicleParams{}, 0.211);
  EXPECT_NEAR(sol.u.thrust, kGravity, 1e-6);
  EXPECT_LT(sol.u.torque.norm(), 1e-6);
  EXPECT_TRUE(sol.converged);
}

TEST(Nmpc, OffsetBelowClimbs) {
  NmpcConfig cfg;
  const Vec3 p(0.0, 0.0, 1.0);
  const NmpcSolution sol = nmpc_solve(at(p - Vec3(0, 0, 0.2)), hover_reference(cfg, p), cfg, VehicleParams{}, 0.211);
  EXPECT_GT(sol.u.thrust, kGravity);
  EXPECT_LT(sol.u.torque.norm(), 1e-6);
}

TEST(Nmpc, ThrustClampedAtBound) {
  NmpcConfig cfg;
  const Vec3 p(0.0, 0.0, 1.0);
  const NmpcSolution sol = nmpc_solve(at(p - Vec3(0, 0, 10.0)), hover_reference(cfg, p), cfg, VehicleParams{}, 0.211);
  EXPECT_DOUBLE_EQ(sol.u.thrust, cfg.u_max[0]);
  EXPECT_TRUE(sol.converged);
}

TEST(Nmpc, RejectsWrongHorizon) {
  NmpcConfig cfg;
  std::vector<ReferencePoint> ref(3);
  EXPECT_THROW(nmpc_solve(at(Vec3::Zero()), ref, cfg, VehicleParams{}, 0.211), std::invalid_argument);
}

TEST(Reference, FlatnessUnitAxisPositiveThrust) {
  VehicleParams p;
  const PiecewiseTrajectory traj = figure_eight(1.5, 0.75, 1.5, 1.0, p.r_max);
  for (double t = 0.0; t <= traj.total_duration(); t += 0.05) {
    const ReferencePoint ref = flat_reference(traj, t, p);
    EXPECT_NEAR(ref.q.norm(), 1.0, 1e-12);
    EXPECT_GT(ref.u.thrust, 0.0);
  }
  double vmax = 0.0;
  for (double t = 0.0; t <= traj.total_duration(); t += 0.01) vmax = std::max(vmax, traj.eval(t, 1).head<3>().norm());
  EXPECT_NEAR(vmax, 1.5, 0.02);
}

TEST(Tracking, HoverWithoutDisturbance) {
  TrackingConfig cfg;
  const TrackingResult res = run_tracking(hover_trajectory(Vec3(0, 0, 1), 0.211, 3.0), cfg);
  EXPECT_LT(res.rmse, 1e-3);
}

TEST(Tracking, ForceEstimateConverges) {
  TrackingConfig cfg;
  cfg.disturbance.kind = DisturbanceProfile::Kind::kConstant;
  cfg.disturbance.value.force = Vec3(0.981, 0.0, 0.0);
  const TrackingResult res = run_tracking(hover_trajectory(Vec3(0, 0, 1), 0.211, 2.0), cfg);
  const double tau = 1.0 / (2.0 * std::numbers::pi * cfg.force_cutoff_hz);
  int checked = 0;
  for (const auto& row : res.log) {
    if (row.t < 5.0 * tau) continue;
    EXPECT_LT((row.f_ext - cfg.disturbance.value.force).norm(), 0.05 * 0.981) << "t = " << row.t;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Tracking, IndiReducesAttitudeErrorUnderTorque) {
  TrackingConfig cfg;
  cfg.force_compensation = false;
  cfg.disturbance.kind = DisturbanceProfile::Kind::kConstant;
  cfg.disturbance.value.torque = Vec3(0.02, 0.0, 0.0);
  const PiecewiseTrajectory hover = hover_trajectory(Vec3(0, 0, 1), 0.211, 3.0);
  const double with = rms_attitude(run_tracking(hover, cfg));
  cfg.indi = false;
  const double without = rms_attitude(run_tracking(hover, cfg));
  EXPECT_LT(with, without);
}

TEST(Tracking, CompensationInertWithoutDisturbance) {
  VehicleParams p;
  const PiecewiseTrajectory traj = figure_eight(1.5, 0.75, 1.5, 1.0, p.r_max);
  TrackingConfig cfg;
  const double on = run_tracking(traj, cfg).rmse;
  cfg.force_compensation = false;
  cfg.indi = false;
  const double off = run_tracking(traj, cfg).rmse;
  EXPECT_LT(std::abs(on - off), 0.05 * off);
}

TEST(Tracking, Deterministic) {
  TrackingConfig cfg;
  cfg.disturbance.noise_force_std = 0.1;
  cfg.accel_noise_std = 0.05;
  cfg.seed = 4;
  const PiecewiseTrajectory hover = hover_trajectory(Vec3(0, 0, 1), 0.211, 1.0);
  const TrackingResult a = run_tracking(hover, cfg), b = run_tracking(hover, cfg);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) ASSERT_EQ(a.log[i].state.p, b.log[i].state.p);
}
