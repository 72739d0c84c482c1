#include "morph/minco.hpp"
#include "morph/traj_opt.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "oracles.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace morph;
using namespace morph_test;

TEST(Trajectory, ConstantAndQuadraticPieces) {
  PieceCoeffs c = PieceCoeffs::Zero();
  c(0, 0) = 2.0;
  c(2, 1) = 1.0;  // y = t^2
  const PiecewiseTrajectory traj({c}, {1.5});
  for (double t : {0.0, 0.3, 1.5}) {
    EXPECT_EQ(traj.eval(t, 0)[0], 2.0);
    EXPECT_EQ(traj.eval(t, 1)[0], 0.0);
    EXPECT_DOUBLE_EQ(traj.eval(t, 2)[1], 2.0);
  }
  EXPECT_THROW(traj.eval(1.6, 0), std::domain_error);
  EXPECT_THROW(traj.eval(-0.1, 0), std::domain_error);
}

TEST(Trajectory, JunctionTimeMapsToFollowingPiece) {
  PieceCoeffs a = PieceCoeffs::Zero(), b = PieceCoeffs::Zero();
  a(0, 0) = 1.0;
  b(0, 0) = 2.0;
  const PiecewiseTrajectory traj({a, b}, {1.0, 1.0});
  EXPECT_EQ(traj.locate(1.0).first, 1);
  EXPECT_EQ(traj.locate(2.0).first, 1);
  EXPECT_EQ(traj.eval(1.0, 0)[0], 2.0);
}

TEST(Trajectory, CoefficientDumpRoundTrip) {
  std::mt19937_64 rng(2);
  const EsdfField field = clutter_field();
  const RandomInstance inst = random_instance(rng, field, false);
  const PiecewiseTrajectory traj =
      minco_construct(inst.waypoints, inst.durations, inst.problem.head, inst.problem.tail);
  std::stringstream ss;
  traj.write_coefficients(ss);
  const PiecewiseTrajectory back = PiecewiseTrajectory::read_coefficients(ss);
  ASSERT_EQ(back.pieces(), traj.pieces());
  for (int i = 0; i < traj.pieces(); ++i) {
    EXPECT_EQ(back.durations()[i], traj.durations()[i]);
    EXPECT_EQ(back.coefficients()[i], traj.coefficients()[i]);
  }
}

TEST(Minco, RestToRestSinglePieceIsQuinticBlend) {
  Eigen::Matrix4Xd q(4, 0);
  Eigen::VectorXd T(1);
  T << 1.0;
  const PiecewiseTrajectory traj = minco_construct(q, T, rest_at(Vec4::Zero()), rest_at(Vec4(1.0, 0, 0, 0)));
  for (int i = 0; i <= 100; ++i) {
    const double t = i / 100.0;
    const double expect = 10 * std::pow(t, 3) - 15 * std::pow(t, 4) + 6 * std::pow(t, 5);
    EXPECT_NEAR(traj.eval(t, 0)[0], expect, 1e-9);
  }
  const auto oracle = hermite_quintic(0, 0, 0, 1, 0, 0, 1.0);
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(traj.coefficients()[0](k, 0), oracle[k], 1e-9);
}

TEST(Minco, ConstantWaypointsGiveConstantTrajectory) {
  const Vec4 c(1.0, 2.0, 0.5, 0.17);
  Eigen::Matrix4Xd q(4, 3);
  for (int i = 0; i < 3; ++i) q.col(i) = c;
  Eigen::VectorXd T = Eigen::VectorXd::Constant(4, 0.7);
  const PiecewiseTrajectory traj = minco_construct(q, T, rest_at(c), rest_at(c));
  EXPECT_NEAR(traj.jerk_energy().sum(), 0.0, 1e-18);
  EXPECT_NEAR((traj.eval(1.3, 0) - c).norm(), 0.0, 1e-12);
}

TEST(Minco, BoundaryAndJunctionContinuity) {
  std::mt19937_64 rng(13);
  const EsdfField field = clutter_field();
  for (int trial = 0; trial < 20; ++trial) {
    const RandomInstance inst = random_instance(rng, field, false);
    const PiecewiseTrajectory traj =
        minco_construct(inst.waypoints, inst.durations, inst.problem.head, inst.problem.tail);
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR((traj.eval(0.0, k) - inst.problem.head.col(k)).norm(), 0.0, 1e-9);
      EXPECT_NEAR((traj.eval(traj.total_duration(), k) - inst.problem.tail.col(k)).norm(), 0.0, 1e-9);
    }
    for (int i = 0; i + 1 < traj.pieces(); ++i) {
      const PieceCoeffs& left = traj.coefficients()[i];
      const PieceCoeffs& right = traj.coefficients()[i + 1];
      EXPECT_NEAR((PiecewiseTrajectory::eval_piece(left, traj.durations()[i], 0) - inst.waypoints.col(i)).norm(), 0.0,
                  1e-9);
      for (int k = 0; k <= 2; ++k) {
        const Vec4 d = PiecewiseTrajectory::eval_piece(left, traj.durations()[i], k) -
                       PiecewiseTrajectory::eval_piece(right, 0.0, k);
        EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial << " junction " << i << " order " << k;
      }
    }
  }
}

TEST(Minco, NoMoreEnergyThanNaiveHermiteSpline) {
  std::mt19937_64 rng(17);
  const EsdfField field = clutter_field();
  for (int trial = 0; trial < 20; ++trial) {
    const RandomInstance inst = random_instance(rng, field, false);
    const PiecewiseTrajectory traj =
        minco_construct(inst.waypoints, inst.durations, inst.problem.head, inst.problem.tail);
    const int m = static_cast<int>(inst.durations.size());
    std::vector<Vec4> p(m + 1), v(m + 1, Vec4::Zero()), a(m + 1, Vec4::Zero());
    p[0] = inst.problem.head.col(0);
    v[0] = inst.problem.head.col(1);
    a[0] = inst.problem.head.col(2);
    p[m] = inst.problem.tail.col(0);
    v[m] = inst.problem.tail.col(1);
    a[m] = inst.problem.tail.col(2);
    for (int i = 1; i < m; ++i) p[i] = inst.waypoints.col(i - 1);
    for (int i = 1; i < m; ++i)
      v[i] = (p[i + 1] - p[i - 1]) / (inst.durations[i - 1] + inst.durations[i]);
    std::vector<PieceCoeffs> coeffs(m);
    std::vector<double> durations(inst.durations.data(), inst.durations.data() + m);
    for (int i = 0; i < m; ++i)
      for (int ch = 0; ch < 4; ++ch)
        coeffs[i].col(ch) =
            hermite_quintic(p[i][ch], v[i][ch], a[i][ch], p[i + 1][ch], v[i + 1][ch], a[i + 1][ch], durations[i]);
    const PiecewiseTrajectory naive(coeffs, durations);
    EXPECT_LE(traj.jerk_energy().sum(), naive.jerk_energy().sum() * (1 + 1e-12)) << "trial " << trial;
  }
}

TEST(Minco, RejectsNonPositiveDuration) {
  Eigen::Matrix4Xd q(4, 1);
  q.setZero();
  Eigen::VectorXd T(2);
  T << 1.0, 0.0;
  EXPECT_THROW(minco_construct(q, T, rest_at(Vec4::Zero()), rest_at(Vec4::Ones())), std::domain_error);
}

TEST(Objective, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(99);
  const EsdfField field = clutter_field();
  for (int trial = 0; trial < 10; ++trial) {
    const RandomInstance inst = random_instance(rng, field, trial % 3 == 2);
    TrajectoryObjective obj(inst.problem, static_cast<int>(inst.durations.size()));
    Eigen::VectorXd x = obj.pack(inst.waypoints, inst.durations), g;
    obj.evaluate(x, g);
    ASSERT_GT(obj.terms().penalty, 0.0) << "instance should activate penalties";
    Eigen::VectorXd fd(x.size());
    for (int i = 0; i < x.size(); ++i) {
      const double h = 1e-6;
      Eigen::VectorXd xp = x, xm = x, dummy;
      xp[i] += h;
      xm[i] -= h;
      fd[i] = (obj.evaluate(xp, dummy) - obj.evaluate(xm, dummy)) / (2 * h);
    }
    const double rel = (fd - g).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff();
    EXPECT_LT(rel, 1e-4) << "trial " << trial;
  }
}

TEST(Objective, EqualsQuadratureJerkEnergyWithoutPenalties) {
  std::mt19937_64 rng(31);
  const EsdfField field = clutter_field();
  for (int trial = 0; trial < 5; ++trial) {
    RandomInstance inst = random_instance(rng, field, false);
    inst.problem.weights = {0.0, 0.0};
    inst.problem.a = 0.0;
    inst.problem.w_t = 0.0;
    TrajectoryObjective obj(inst.problem, static_cast<int>(inst.durations.size()));
    Eigen::VectorXd g;
    const double j = obj.evaluate(obj.pack(inst.waypoints, inst.durations), g);
    const PiecewiseTrajectory traj =
        minco_construct(inst.waypoints, inst.durations, inst.problem.head, inst.problem.tail);
    const double quad = simpson_jerk_energy(traj);
    EXPECT_NEAR(j, quad, 1e-6 * quad);
  }
}

TEST(Objective, StraightLineAtMaxRadiusHasNoPenalty) {
  const EsdfField field = compute_esdf(build_grid({}, AxisBox{Vec3::Zero(), Vec3(4.0, 2.0, 2.0)}, 0.1));
  OptProblem p = base_problem(field);
  p.head = rest_at(Vec4(1.0, 1.0, 1.0, 0.211));
  p.tail = rest_at(Vec4(3.0, 1.0, 1.0, 0.211));
  Eigen::Matrix4Xd q(4, 1);
  q.col(0) = Vec4(2.0, 1.0, 1.0, 0.211);
  Eigen::VectorXd T = Eigen::VectorXd::Constant(2, 2.0);
  TrajectoryObjective obj(p, 2);
  Eigen::VectorXd g;
  const double j = obj.evaluate(obj.pack(q, T), g);
  const PiecewiseTrajectory traj = minco_construct(q, T, p.head, p.tail);
  EXPECT_EQ(obj.terms().penalty, 0.0);
  EXPECT_NEAR(obj.terms().sorr, 0.0, 1e-24);
  EXPECT_NEAR(j, traj.jerk_energy().sum() + p.w_t * 4.0, 1e-9);
}

TEST(Objective, SorrScale) {
  const EsdfField field = compute_esdf(build_grid({}, AxisBox{Vec3::Zero(), Vec3(4.0, 2.0, 2.0)}, 0.1));
  OptProblem p = base_problem(field);
  p.radius_mode = RadiusMode::kFrozen;
  for (double r : {0.211, 0.131}) {
    p.head = rest_at(Vec4(1.0, 1.0, 1.0, r));
    p.tail = rest_at(Vec4(3.0, 1.0, 1.0, r));
    Eigen::Matrix4Xd q(4, 1);
    q.col(0) = Vec4(2.0, 1.2, 1.0, r);
    const Eigen::VectorXd T = Eigen::VectorXd::Constant(2, 1.7);
    const OptReport rep = evaluate_costs(minco_construct(q, T, p.head, p.tail), p);
    const double expect = std::pow((r - 0.211) / 0.211, 2) * 3.4;
    EXPECT_NEAR(rep.sorr, expect, 1e-12);
    EXPECT_EQ(rep.rce, 0.0);
  }
}

TEST(Optimize, OptimalSeedConverges) {
  const EsdfField field = compute_esdf(build_grid({}, AxisBox{Vec3::Zero(), Vec3(5.0, 2.0, 2.0)}, 0.1));
  OptProblem p = base_problem(field);
  const double d = 2.0;
  p.head = rest_at(Vec4(1.0, 1.0, 1.0, 0.211));
  p.tail = rest_at(Vec4(1.0 + d, 1.0, 1.0, 0.211));
  // min over T of 720 d^2 / T^5 + w_T T.
  const double t_star = std::pow(3600.0 * d * d / p.w_t, 1.0 / 6.0);
  const double j_star = 720.0 * d * d / std::pow(t_star, 5) + p.w_t * t_star;
  Eigen::VectorXd T(1);
  T << t_star;
  const OptResult res = optimize_from(Eigen::Matrix4Xd(4, 0), T, p);
  EXPECT_TRUE(res.report.converged);
  EXPECT_NEAR(res.report.objective, j_star, 1e-6);
  EXPECT_NEAR(res.report.total, j_star, 1e-6);
}

TEST(Optimize, MonotoneHistoryAndVerifiedOutput) {
  const EsdfField field = clutter_field();
  OptProblem p = base_problem(field);
  p.head = rest_at(Vec4(0.5, 0.5, 0.5, 0.211));
  p.tail = rest_at(Vec4(3.5, 2.5, 0.5, 0.211));
  Eigen::Matrix4Xd q(4, 2);
  q.col(0) = Vec4(1.9, 1.3, 0.5, 0.2);
  q.col(1) = Vec4(3.0, 1.25, 0.5, 0.2);
  Eigen::VectorXd T = Eigen::VectorXd::Constant(3, 1.2);
  const OptResult res = optimize_from(q, T, p);
  ASSERT_FALSE(res.report.history.empty());
  for (std::size_t i = 1; i < res.report.history.size(); ++i)
    EXPECT_LE(res.report.history[i], res.report.history[i - 1] + 1e-12);
  const ConstraintResiduals r = verify_constraints(res.trajectory, p, 4 * p.samples_per_piece);
  EXPECT_LE(r.worst(), 1e-3);
  EXPECT_GE(r.min_clearance, p.margin - 1e-3);
}

TEST(Optimize, SeedTooShort) {
  const EsdfField field = clutter_field();
  OptProblem p = base_problem(field);
  p.head = rest_at(Vec4(0.5, 0.5, 0.5, 0.211));
  p.tail = p.head;
  std::vector<PathSegment> seed(1);
  seed[0].state.p = Vec3(0.5, 0.5, 0.5);
  seed[0].state.r = 0.211;
  try {
    optimize(seed, p);
    FAIL();
  } catch (const OptimizationError& e) {
    EXPECT_EQ(e.kind(), OptimizationError::Kind::kSeedTooShort);
  }
}

TEST(Payload, ZeroBoxOnlyFreezesRadius) {
  const EsdfField field = clutter_field();
  OptProblem p = base_problem(field);
  p.head = rest_at(Vec4(0.5, 0.5, 0.5, 0.15));
  const OptProblem out = attach_payload(p, PayloadBox{});
  EXPECT_EQ(out.radius_mode, RadiusMode::kFrozen);
  EXPECT_TRUE(out.body.attachments.empty());
}

TEST(Payload, BoxSurfaceCoversFacesAndLowersClearance) {
  const PayloadBox box{Vec3(0.2, 0.2, 0.4), Vec3(0.0, 0.0, -0.25)};
  const auto pts = sample_box_surface(box, 0.05, 0.05);
  ASSERT_FALSE(pts.empty());
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (const Vec3& q : pts) {
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
    const Vec3 local = (q - box.offset).cwiseAbs();
    const bool on_face = std::abs(local.x() - 0.1) < 1e-12 || std::abs(local.y() - 0.1) < 1e-12 ||
                         std::abs(local.z() - 0.2) < 1e-12;
    EXPECT_TRUE(on_face);
  }
  EXPECT_NEAR(lo.z(), -0.45, 1e-12);
  EXPECT_NEAR(hi.z(), -0.05, 1e-12);
  EXPECT_NEAR(hi.x(), 0.1, 1e-12);

  const EsdfField field = clutter_field();
  OptProblem p = base_problem(field);
  p.head = rest_at(Vec4(0.5, 0.5, 0.5, 0.15));
  const OptProblem with = attach_payload(p, box);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(0.6, 3.4), uy(0.6, 2.4);
  for (int t = 0; t < 50; ++t) {
    const Vec3 c(ux(rng), uy(rng), 0.5);
    const double bare = body_clearance(field, c, Mat3::Identity(), p.body, 0.15).distance;
    const double loaded = body_clearance(field, c, Mat3::Identity(), with.body, 0.15).distance;
    EXPECT_LE(loaded, bare);
  }
}

TEST(Optimize, FrozenPayloadKeepsRadiusExactlyConstant) {
  const EsdfField field = compute_esdf(build_grid({}, AxisBox{Vec3::Zero(), Vec3(4.0, 2.0, 1.5)}, 0.05));
  OptProblem p = base_problem(field);
  p.head = rest_at(Vec4(0.8, 1.0, 0.9, 0.15));
  p.tail = rest_at(Vec4(3.2, 1.0, 0.9, 0.15));
  p = attach_payload(p, PayloadBox{Vec3(0.2, 0.2, 0.4), Vec3(0.0, 0.0, -0.25)});
  Eigen::Matrix4Xd q(4, 1);
  q.col(0) = Vec4(2.0, 1.1, 0.9, 0.15);
  const OptResult res = optimize_from(q, Eigen::VectorXd::Constant(2, 1.5), p);
  for (const double t : res.trajectory.sample_times(100.0)) {
    EXPECT_NEAR(res.trajectory.eval(t, 0)[3], 0.15, 1e-12);
    EXPECT_EQ(res.trajectory.eval(t, 1)[3], 0.0);
  }
  EXPECT_EQ(res.report.rce, 0.0);
}
