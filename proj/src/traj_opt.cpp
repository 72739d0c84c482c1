#include "morph/traj_opt.hpp"

#include "morph/log.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <tuple>

namespace morph {

void OptProblem::validate() const {
  if (field == nullptr) throw std::invalid_argument("optimization problem has no field");
  body.validate();
  if (samples_per_piece < 4 || samples_per_piece % 2 != 0)
    throw std::invalid_argument("samples per piece must be even and >= 4");
  if (a < 0.0 || w_t < 0.0 || weights.clearance < 0.0 || weights.dynamics < 0.0)
    throw std::invalid_argument("weights must be non-negative");
  if (!(v_max > 0.0) || !(a_max > 0.0) || !(omega_max >= 0.0) || !(alpha_max >= 0.0))
    throw std::invalid_argument("dynamic bounds must be positive");
  for (const double r : {head(3, 0), tail(3, 0)}) {
    if (r < body.r_min - 1e-12 || r > body.r_max + 1e-12)
      throw std::invalid_argument("boundary radius outside [r_min, r_max]");
  }
}

double ConstraintResiduals::worst() const {
  return std::max({velocity, acceleration, radius_rate, radius_accel, radius_bounds, clearance});
}

namespace {

double trapezoid_weight(int j, int kappa, double h) { return (j == 0 || j == kappa) ? 0.5 * h : h; }

double simpson_weight(int j, int kappa, double h) {
  const double s = (j == 0 || j == kappa) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Cubic hinge accumulation: adds w * max(0, g)^3 and returns d/dg.
inline double hinge(double g, double w, double& value) {
  if (g <= 0.0) return 0.0;
  value += w * g * g * g;
  return 3.0 * w * g * g;
}

}  // namespace

TrajectoryObjective::TrajectoryObjective(const OptProblem& problem, int pieces)
    : problem_(problem),
      pieces_(pieces),
      waypoint_rows_(problem.radius_mode == RadiusMode::kFree ? 4 : 3),
      frozen_radius_(problem.head(3, 0)) {
  problem_.validate();
  minco_.set_conditions(problem_.head, problem_.tail, pieces);
  for (int l = 0; l <= problem_.body.axial_samples; ++l) {
    for (int o = 0; o < problem_.body.angular_samples; ++o) {
      lateral_dirs_.push_back(lateral_direction(o, problem_.body.angular_samples));
      lateral_offsets_unit_.push_back(
          lateral_sample(0.0, problem_.body.height, o, problem_.body.angular_samples, l, problem_.body.axial_samples));
    }
  }
}

Eigen::VectorXd TrajectoryObjective::pack(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations) const {
  Eigen::VectorXd x(dimension());
  int k = 0;
  for (int i = 0; i + 1 < pieces_; ++i)
    for (int r = 0; r < waypoint_rows_; ++r) x[k++] = waypoints(r, i);
  for (int i = 0; i < pieces_; ++i) x[k++] = std::log(durations[i]);
  return x;
}

void TrajectoryObjective::unpack(const Eigen::VectorXd& x, Eigen::Matrix4Xd& waypoints,
                                 Eigen::VectorXd& durations) const {
  waypoints.resize(4, pieces_ - 1);
  durations.resize(pieces_);
  int k = 0;
  for (int i = 0; i + 1 < pieces_; ++i) {
    for (int r = 0; r < waypoint_rows_; ++r) waypoints(r, i) = x[k++];
    if (waypoint_rows_ == 3) waypoints(3, i) = frozen_radius_;
  }
  for (int i = 0; i < pieces_; ++i) durations[i] = std::exp(x[k++]);
}

double TrajectoryObjective::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
  Eigen::Matrix4Xd q;
  Eigen::VectorXd T;
  unpack(x, q, T);
  Eigen::Matrix4Xd gq;
  Eigen::VectorXd gT;
  const double f = evaluate_direct(q, T, gq, gT);
  grad.resize(dimension());
  int k = 0;
  for (int i = 0; i + 1 < pieces_; ++i)
    for (int r = 0; r < waypoint_rows_; ++r) grad[k++] = gq(r, i);
  for (int i = 0; i < pieces_; ++i) grad[k++] = gT[i] * T[i];
  return f;
}

double TrajectoryObjective::evaluate_direct(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations,
                                            Eigen::Matrix4Xd& grad_waypoints, Eigen::VectorXd& grad_durations) {
  const OptProblem& P = problem_;
  const bool free_radius = P.radius_mode == RadiusMode::kFree;
  minco_.set_parameters(waypoints, durations);
  const Eigen::MatrixXd& coeffs = minco_.coefficients();

  Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(coeffs.rows(), 4);
  Eigen::VectorXd gT = Eigen::VectorXd::Zero(pieces_);

  const Vec4 energy = minco_.energy();
  minco_.add_energy_gradient(Vec4::Ones(), gc, gT);

  const double total_time = durations.sum();
  gT.array() += P.w_t;

  const int kappa = P.samples_per_piece;
  const double r_max = P.body.r_max, r_min = P.body.r_min;
  const double v_lim = P.v_max * P.dynamics_scale, a_lim = P.a_max * P.dynamics_scale;
  const double w_lim = P.omega_max * P.dynamics_scale, al_lim = P.alpha_max * P.dynamics_scale;
  const double margin = P.margin + P.clearance_buffer;
  const double r_range = r_max - r_min;
  const double wc = P.weights.clearance, wd = P.weights.dynamics;
  const EsdfField& field = *P.field;

  double sorr = 0.0, penalty = 0.0;
  for (int i = 0; i < pieces_; ++i) {
    const double Ti = durations[i];
    const double h = Ti / kappa;
    const PieceCoeffs c = coeffs.block<kCoeffCount, 4>(kCoeffCount * i, 0);
    for (int j = 0; j <= kappa; ++j) {
      const double t = j * h;
      const auto b0 = basis(t, 0), b1 = basis(t, 1), b2 = basis(t, 2), b3 = basis(t, 3);
      const Vec4 s0 = c.transpose() * b0, s1 = c.transpose() * b1, s2 = c.transpose() * b2,
                 s3 = c.transpose() * b3;
      Vec4 g0 = Vec4::Zero(), g1 = Vec4::Zero(), g2 = Vec4::Zero();

      // Radius regularization on the Simpson grid.
      const double sw = simpson_weight(j, kappa, h);
      const double e = (s0[3] - r_max) / r_max;
      sorr += sw * e * e;
      g0[3] += P.a * sw * 2.0 * e / r_max;
      gT[i] += P.a * e * e * sw / Ti;

      double pen = 0.0;
      const double tw = trapezoid_weight(j, kappa, h);
      {
        const Vec3 v = s1.head<3>(), acc = s2.head<3>();
        const double dv = hinge(v.squaredNorm() - v_lim * v_lim, wd, pen);
        g1.head<3>() += tw * dv * 2.0 * v;
        const double da = hinge(acc.squaredNorm() - a_lim * a_lim, wd, pen);
        g2.head<3>() += tw * da * 2.0 * acc;
      }
      if (free_radius) {
        const double dr = hinge(s1[3] * s1[3] - w_lim * w_lim, wd, pen);
        g1[3] += tw * dr * 2.0 * s1[3];
        const double drr = hinge(s2[3] * s2[3] - al_lim * al_lim, wd, pen);
        g2[3] += tw * drr * 2.0 * s2[3];
        const double dlo = hinge((r_min - s0[3]) / r_range, wc, pen);
        g0[3] -= tw * dlo / r_range;
        const double dhi = hinge((s0[3] - r_max) / r_range, wc, pen);
        g0[3] += tw * dhi / r_range;
      }
      {
        const Vec3 p = s0.head<3>();
        const double r = s0[3];
        const double extent = P.body.max_extent(std::abs(r));
        const double dc = field.bounded_distance(p, nullptr);
        if (dc - kInterpolantLipschitz * extent < margin) {
          Vec3 grad;
          for (std::size_t k = 0; k < lateral_dirs_.size(); ++k) {
            const Vec3 point = p + r * lateral_dirs_[k] + lateral_offsets_unit_[k];
            const double d = field.bounded_distance(point, &grad);
            const double dd = hinge(margin - d, wc, pen);
            if (dd == 0.0) continue;
            g0.head<3>() -= tw * dd * grad;
            if (free_radius) g0[3] -= tw * dd * grad.dot(lateral_dirs_[k]);
          }
          for (const Vec3& offset : P.body.attachments) {
            const double d = field.bounded_distance(p + offset, &grad);
            const double dd = hinge(margin - d, wc, pen);
            if (dd != 0.0) g0.head<3>() -= tw * dd * grad;
          }
        }
      }
      penalty += tw * pen;
      gT[i] += pen * tw / Ti;

      if (!free_radius) g0[3] = 0.0;
      gc.block<kCoeffCount, 4>(kCoeffCount * i, 0) += b0 * g0.transpose() + b1 * g1.transpose() + b2 * g2.transpose();
      gT[i] += (g0.dot(s1) + g1.dot(s2) + g2.dot(s3)) * (double(j) / kappa);
    }
  }

  minco_.propagate_gradient(gc, gT, grad_waypoints, grad_durations);

  terms_ = OptReport{};
  terms_.pce = energy[0] + energy[1] + energy[2];
  terms_.rce = energy[3];
  terms_.sorr = sorr;
  terms_.sorr_weighted = P.a * sorr;
  terms_.time = total_time;
  terms_.time_cost = P.w_t * total_time;
  terms_.penalty = penalty;
  terms_.total = terms_.pce + terms_.rce + terms_.sorr_weighted + terms_.time_cost;
  terms_.objective = terms_.total + penalty;
  return terms_.objective;
}

OptReport evaluate_costs(const PiecewiseTrajectory& traj, const OptProblem& problem) {
  OptReport report;
  const Vec4 energy = traj.jerk_energy();
  report.pce = energy[0] + energy[1] + energy[2];
  report.rce = energy[3];
  const int kappa = problem.samples_per_piece;
  const double r_max = problem.body.r_max;
  double sorr = 0.0;
  for (int i = 0; i < traj.pieces(); ++i) {
    const double h = traj.durations()[i] / kappa;
    for (int j = 0; j <= kappa; ++j) {
      const double r = PiecewiseTrajectory::eval_piece(traj.coefficients()[i], j * h, 0)[3];
      const double e = (r - r_max) / r_max;
      sorr += simpson_weight(j, kappa, h) * e * e;
    }
  }
  report.sorr = sorr;
  report.sorr_weighted = problem.a * sorr;
  report.time = traj.total_duration();
  report.time_cost = problem.w_t * report.time;
  report.total = report.pce + report.rce + report.sorr_weighted + report.time_cost;
  report.objective = report.total;
  return report;
}

ConstraintResiduals verify_constraints(const PiecewiseTrajectory& traj, const OptProblem& problem,
                                       int samples_per_piece) {
  ConstraintResiduals res;
  res.min_clearance = std::numeric_limits<double>::infinity();
  const bool free_radius = problem.radius_mode == RadiusMode::kFree;
  for (int i = 0; i < traj.pieces(); ++i) {
    const auto& c = traj.coefficients()[i];
    const double h = traj.durations()[i] / samples_per_piece;
    for (int j = 0; j <= samples_per_piece; ++j) {
      const double t = j * h;
      const Vec4 s0 = PiecewiseTrajectory::eval_piece(c, t, 0);
      const Vec4 s1 = PiecewiseTrajectory::eval_piece(c, t, 1);
      const Vec4 s2 = PiecewiseTrajectory::eval_piece(c, t, 2);
      res.velocity = std::max(res.velocity, s1.head<3>().norm() - problem.v_max);
      res.acceleration = std::max(res.acceleration, s2.head<3>().norm() - problem.a_max);
      if (free_radius) {
        res.radius_rate = std::max(res.radius_rate, std::abs(s1[3]) - problem.omega_max);
        res.radius_accel = std::max(res.radius_accel, std::abs(s2[3]) - problem.alpha_max);
      }
      res.radius_bounds =
          std::max({res.radius_bounds, problem.body.r_min - s0[3], s0[3] - problem.body.r_max});
      try {
        const Clearance cl =
            body_clearance(*problem.field, s0.head<3>(), Mat3::Identity(), problem.body, s0[3]);
        res.min_clearance = std::min(res.min_clearance, cl.distance);
      } catch (const OutOfMapError&) {
        res.out_of_map = true;
      }
    }
  }
  res.clearance = std::max(0.0, problem.margin - res.min_clearance);
  return res;
}

void seed_from_path(const std::vector<PathSegment>& path, const OptProblem& problem, Eigen::Matrix4Xd& waypoints,
                    Eigen::VectorXd& durations) {
  if (path.size() < 2) throw OptimizationError(OptimizationError::Kind::kSeedTooShort, "seed path has < 2 states");
  std::vector<Vec4> ends;
  std::vector<double> times;
  double acc = 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    acc += path[k].dt;
    if (acc >= problem.min_piece_duration) {
      ends.push_back(path[k].state.position4());
      times.push_back(acc);
      acc = 0.0;
    }
  }
  if (acc > 0.0) {
    if (times.empty()) {
      ends.push_back(path.back().state.position4());
      times.push_back(std::max(acc, problem.min_piece_duration));
    } else {
      ends.back() = path.back().state.position4();
      times.back() += acc;
    }
  }
  const int m = static_cast<int>(times.size());
  waypoints.resize(4, m - 1);
  durations.resize(m);
  for (int i = 0; i < m; ++i) durations[i] = times[i];
  for (int i = 0; i + 1 < m; ++i) {
    waypoints.col(i) = ends[i];
    if (problem.radius_mode == RadiusMode::kFrozen) {
      waypoints(3, i) = problem.head(3, 0);
    } else {
      waypoints(3, i) = std::clamp(waypoints(3, i), problem.body.r_min, problem.body.r_max);
    }
  }
}

namespace {

bool verification_passes(const ConstraintResiduals& r, double tol) { return !r.out_of_map && r.worst() <= tol; }

}  // namespace

OptResult optimize_from(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations,
                        const OptProblem& problem) {
  const int m = static_cast<int>(durations.size());
  TrajectoryObjective objective(problem, m);
  Eigen::VectorXd x = objective.pack(waypoints, durations);
  const auto fn = [&](const Eigen::VectorXd& z, Eigen::VectorXd& g) { return objective.evaluate(z, g); };

  LbfgsResult solve = lbfgs_minimize(x, fn, problem.solver);
  int total_iterations = solve.iterations;
  int escalations = 0;

  const auto build = [&]() {
    Eigen::Matrix4Xd q;
    Eigen::VectorXd T;
    objective.unpack(x, q, T);
    PiecewiseTrajectory traj = minco_construct(q, T, problem.head, problem.tail);
    if (problem.radius_mode == RadiusMode::kFrozen) {
      // The linear solve leaves round-off in the constant channel.
      std::vector<PieceCoeffs> coeffs = traj.coefficients();
      for (auto& c : coeffs) {
        c.col(3).setZero();
        c(0, 3) = problem.head(3, 0);
      }
      traj = PiecewiseTrajectory(std::move(coeffs), traj.durations());
    }
    return traj;
  };
  PiecewiseTrajectory traj = build();
  const int dense = 4 * problem.samples_per_piece;
  ConstraintResiduals residuals = verify_constraints(traj, problem, dense);
  if (!verification_passes(residuals, problem.verify_tolerance)) {
    logger().info("verification residual {:.3e}; escalating penalty weights", residuals.worst());
    PenaltyWeights w = problem.weights;
    w.clearance *= 10.0;
    w.dynamics *= 10.0;
    objective.set_weights(w);
    solve = lbfgs_minimize(x, fn, problem.solver);
    total_iterations += solve.iterations;
    escalations = 1;
    traj = build();
    residuals = verify_constraints(traj, problem, dense);
  }

  OptReport report = evaluate_costs(traj, problem);
  Eigen::VectorXd g;
  report.objective = objective.evaluate(x, g);
  report.penalty = objective.terms().penalty;
  report.residuals = residuals;
  report.iterations = total_iterations;
  report.escalations = escalations;
  report.converged = solve.converged();
  report.status = to_string(solve.status);
  report.history = std::move(solve.history);

  if (!verification_passes(residuals, problem.verify_tolerance)) {
    throw OptimizationError(
        OptimizationError::Kind::kVerificationFailed,
        fmt::format("trajectory verification failed: worst residual {:.3e}{}", residuals.worst(),
                    residuals.out_of_map ? " (leaves the map)" : ""),
        report);
  }
  return {std::move(traj), std::move(report)};
}

OptResult optimize(const std::vector<PathSegment>& seed, const OptProblem& problem) {
  problem.validate();
  Eigen::Matrix4Xd q;
  Eigen::VectorXd T;
  seed_from_path(seed, problem, q, T);
  return optimize_from(q, T, problem);
}

std::vector<Vec3> sample_box_surface(const PayloadBox& box, double lateral_spacing, double axial_spacing) {
  std::vector<Vec3> out;
  if ((box.size.array() <= 0.0).any()) return out;
  const Vec3 half = 0.5 * box.size;
  const auto steps = [](double length, double spacing) {
    return std::max(1, static_cast<int>(std::ceil(length / spacing - 1e-9)));
  };
  const int nx = steps(box.size.x(), lateral_spacing);
  const int ny = steps(box.size.y(), lateral_spacing);
  const int nz = steps(box.size.z(), axial_spacing);
  std::map<std::tuple<long, long, long>, Vec3> unique;
  const auto add = [&](double x, double y, double z) {
    const Vec3 p = box.offset + Vec3(x, y, z);
    const auto key = std::make_tuple(std::lround(p.x() * 1e9), std::lround(p.y() * 1e9), std::lround(p.z() * 1e9));
    unique.emplace(key, p);
  };
  const auto coord = [](double half_len, int n, int k) { return -half_len + 2.0 * half_len * (double(k) / n); };
  for (int j = 0; j <= ny; ++j)
    for (int k = 0; k <= nz; ++k) {
      add(-half.x(), coord(half.y(), ny, j), coord(half.z(), nz, k));
      add(half.x(), coord(half.y(), ny, j), coord(half.z(), nz, k));
    }
  for (int i = 0; i <= nx; ++i)
    for (int k = 0; k <= nz; ++k) {
      add(coord(half.x(), nx, i), -half.y(), coord(half.z(), nz, k));
      add(coord(half.x(), nx, i), half.y(), coord(half.z(), nz, k));
    }
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j) {
      add(coord(half.x(), nx, i), coord(half.y(), ny, j), -half.z());
      add(coord(half.x(), nx, i), coord(half.y(), ny, j), half.z());
    }
  out.reserve(unique.size());
  for (const auto& [key, p] : unique) out.push_back(p);
  return out;
}

OptProblem attach_payload(const OptProblem& problem, const PayloadBox& box) {
  OptProblem out = problem;
  out.radius_mode = RadiusMode::kFrozen;
  const double r = problem.head(3, 0);
  const double lateral = 2.0 * std::numbers::pi * r / problem.body.angular_samples;
  const double axial = problem.body.height / problem.body.axial_samples;
  const auto points = sample_box_surface(box, lateral, axial);
  out.body.attachments.insert(out.body.attachments.end(), points.begin(), points.end());
  out.body.radius = r;
  return out;
}

}  // namespace morph
