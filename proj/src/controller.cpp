#include "morph/controller.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace morph {

void NmpcConfig::validate() const {
  if (horizon < 2) throw std::invalid_argument("NMPC horizon must be >= 2");
  if (!(dt > 0.0)) throw std::invalid_argument("NMPC step must be positive");
  if ((q_p.array() <= 0.0).any() || (q_v.array() <= 0.0).any() || (q_q.array() <= 0.0).any() ||
      (q_w.array() <= 0.0).any() || (w_u.array() <= 0.0).any() || !(terminal_scale > 0.0))
    throw std::invalid_argument("NMPC weights must be positive");
  if ((u_min.array() > u_max.array()).any()) throw std::invalid_argument("NMPC input bounds inverted");
  if (max_iterations < 1) throw std::invalid_argument("NMPC iteration cap must be >= 1");
}

// ---------------------------------------------------------------------------

Eigen::VectorXd box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi, int max_iterations) {
  const int n = static_cast<int>(g.size());
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n).cwiseMax(lo).cwiseMin(hi);
  std::vector<int> state(n, 0);  // 0 free, -1 lower, +1 upper
  for (int it = 0; it < max_iterations; ++it) {
    std::vector<int> free;
    for (int i = 0; i < n; ++i)
      if (state[i] == 0) free.push_back(i);
    const int nf = static_cast<int>(free.size());
    Eigen::VectorXd y(nf);
    if (nf > 0) {
      Eigen::MatrixXd hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        double s = g[free[a]];
        for (int j = 0; j < n; ++j)
          if (state[j] != 0) s += h(free[a], j) * x[j];
        rhs[a] = -s;
        for (int b = 0; b < nf; ++b) hff(a, b) = h(free[a], free[b]);
      }
      y = hff.ldlt().solve(rhs);
    }
    double alpha = 1.0;
    int block = -1, side = 0;
    for (int a = 0; a < nf; ++a) {
      const int i = free[a];
      const double d = y[a] - x[i];
      if (y[a] < lo[i] && d < 0.0) {
        const double s = (lo[i] - x[i]) / d;
        if (s < alpha) alpha = s, block = i, side = -1;
      } else if (y[a] > hi[i] && d > 0.0) {
        const double s = (hi[i] - x[i]) / d;
        if (s < alpha) alpha = s, block = i, side = 1;
      }
    }
    for (int a = 0; a < nf; ++a) x[free[a]] += alpha * (y[a] - x[free[a]]);
    if (block >= 0) {
      x[block] = side < 0 ? lo[block] : hi[block];
      state[block] = side;
      continue;
    }
    const Eigen::VectorXd grad = h * x + g;
    int release = -1;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const double m = state[i] < 0 ? -grad[i] : (state[i] > 0 ? grad[i] : 0.0);
      if (m > worst) worst = m, release = i;
    }
    if (release < 0) break;
    state[release] = 0;
  }
  return x;
}

// ---------------------------------------------------------------------------

namespace {

using X13 = Eigen::Matrix<double, 13, 1>;
using E12 = Eigen::Matrix<double, 12, 1>;

struct Model {
  double mass;
  Mat3 inertia, inertia_inv;
  double dt;
};

X13 derivative(const Model& m, const X13& x, const Vec4& u) {
  X13 d;
  const Quat q(x[6], x[7], x[8], x[9]);
  const Vec3 w = x.segment<3>(10);
  d.segment<3>(0) = x.segment<3>(3);
  d.segment<3>(3) = u[0] * (q * Vec3::UnitZ()) / m.mass - kGravity * Vec3::UnitZ();
  const Quat prod = q * Quat(0.0, w.x(), w.y(), w.z());
  d.segment<4>(6) = 0.5 * Vec4(prod.w(), prod.x(), prod.y(), prod.z());
  d.segment<3>(10) = m.inertia_inv * (u.tail<3>() - w.cross(m.inertia * w));
  return d;
}

X13 rk4(const Model& m, const X13& x, const Vec4& u) {
  const double h = m.dt;
  const X13 k1 = derivative(m, x, u);
  const X13 k2 = derivative(m, x + 0.5 * h * k1, u);
  const X13 k3 = derivative(m, x + 0.5 * h * k2, u);
  const X13 k4 = derivative(m, x + h * k3, u);
  X13 out = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.segment<4>(6).normalize();
  return out;
}

X13 to_vector(const RigidBodyState& s) {
  X13 x;
  x << s.p, s.v, s.q.w(), s.q.x(), s.q.y(), s.q.z(), s.omega;
  return x;
}

// Rows 1..3 of the left-multiplication matrix of conj(q_ref): vec(conj(q_ref) (x) q) = L q.
Eigen::Matrix<double, 3, 4> conj_left(const Quat& r) {
  const double w = r.w(), x = -r.x(), y = -r.y(), z = -r.z();
  Eigen::Matrix<double, 3, 4> l;
  l << x, w, -z, y, y, z, w, -x, z, -y, x, w;
  return l;
}

double quat_sign(const Quat& r, const X13& x) {
  const double w = r.w() * x[6] + r.x() * x[7] + r.y() * x[8] + r.z() * x[9];
  return w < 0.0 ? -1.0 : 1.0;
}

E12 state_error(const X13& x, const ReferencePoint& ref) {
  E12 e;
  e.segment<3>(0) = x.segment<3>(0) - ref.p;
  e.segment<3>(3) = x.segment<3>(3) - ref.v;
  e.segment<3>(6) = quat_sign(ref.q, x) * conj_left(ref.q) * x.segment<4>(6);
  e.segment<3>(9) = x.segment<3>(10) - ref.omega;
  return e;
}

Eigen::Matrix<double, 12, 13> error_jacobian(const X13& x, const ReferencePoint& ref) {
  Eigen::Matrix<double, 12, 13> g = Eigen::Matrix<double, 12, 13>::Zero();
  g.block<6, 6>(0, 0).setIdentity();
  g.block<3, 4>(6, 6) = quat_sign(ref.q, x) * conj_left(ref.q);
  g.block<3, 3>(9, 10).setIdentity();
  return g;
}

Vec4 input_vector(const ControlInput& u) { return {u.thrust, u.torque.x(), u.torque.y(), u.torque.z()}; }

}  // namespace

NmpcSolver::NmpcSolver(NmpcConfig config) : config_(std::move(config)) { config_.validate(); }

void NmpcSolver::shift(double fraction) {
  if (warm_.cols() == 0 || fraction <= 0.0) return;
  const int n = static_cast<int>(warm_.cols());
  Eigen::MatrixXd out(4, n);
  for (int k = 0; k < n; ++k) {
    const double s = k + fraction;
    const int i0 = std::min(static_cast<int>(std::floor(s)), n - 1);
    const int i1 = std::min(i0 + 1, n - 1);
    const double w = std::clamp(s - i0, 0.0, 1.0);
    out.col(k) = (1.0 - w) * warm_.col(i0) + w * warm_.col(i1);
  }
  warm_ = out;
}

NmpcSolution NmpcSolver::solve(const RigidBodyState& x_now, const std::vector<ReferencePoint>& reference,
                               const VehicleParams& model_params, double r) {
  const NmpcConfig& c = config_;
  const int n = c.horizon;
  if (static_cast<int>(reference.size()) != n + 1)
    throw std::invalid_argument(fmt::format("NMPC reference needs {} knots, got {}", n + 1, reference.size()));

  Model model;
  model.mass = model_params.mass;
  model.inertia = inertia_of(model_params, r);
  model.inertia_inv = model.inertia.inverse();
  model.dt = c.dt;

  Eigen::MatrixXd u(4, n);
  if (warm_.rows() == 4 && warm_.cols() == n) {
    u = warm_;
  } else {
    for (int k = 0; k < n; ++k) u.col(k) = input_vector(reference[k].u);
  }
  for (int k = 0; k < n; ++k) u.col(k) = u.col(k).cwiseMax(c.u_min).cwiseMin(c.u_max);

  const Vec4 sqrt_w = c.w_u.cwiseSqrt();
  E12 sqrt_q;
  sqrt_q << c.q_p.cwiseSqrt(), c.q_v.cwiseSqrt(), c.q_q.cwiseSqrt(), c.q_w.cwiseSqrt();
  const E12 sqrt_qn = std::sqrt(c.terminal_scale) * sqrt_q;
  const int rows = 4 * n + 12 * n;
  const X13 x0 = to_vector(x_now);

  const auto rollout = [&](const Eigen::MatrixXd& uu, std::vector<X13>& xs, Eigen::VectorXd& res) {
    xs.resize(n + 1);
    xs[0] = x0;
    res.resize(rows);
    for (int k = 0; k < n; ++k) {
      xs[k + 1] = rk4(model, xs[k], uu.col(k));
      res.segment<4>(4 * k) = sqrt_w.cwiseProduct(uu.col(k) - input_vector(reference[k].u));
      const E12& sq = (k + 1 == n) ? sqrt_qn : sqrt_q;
      res.segment<12>(4 * n + 12 * k) = sq.cwiseProduct(state_error(xs[k + 1], reference[k + 1]));
    }
    return res.squaredNorm();
  };

  std::vector<X13> xs, xs_trial;
  Eigen::VectorXd res, res_trial;
  double cost = rollout(u, xs, res);

  NmpcSolution out;
  Eigen::MatrixXd jac(rows, 4 * n);
  Eigen::Matrix<double, 13, Eigen::Dynamic> sens(13, 4 * n);
  Eigen::VectorXd lo(4 * n), hi(4 * n);
  for (int it = 1; it <= c.max_iterations; ++it) {
    out.iterations = it;
    jac.setZero();
    sens.setZero();
    for (int k = 0; k < n; ++k) {
      // Forward-difference stage Jacobians.
      Eigen::Matrix<double, 13, 13> a;
      Eigen::Matrix<double, 13, 4> b;
      const X13 base = xs[k + 1];
      for (int i = 0; i < 13; ++i) {
        X13 xp = xs[k];
        const double hstep = 1e-7 * std::max(1.0, std::abs(xp[i]));
        xp[i] += hstep;
        a.col(i) = (rk4(model, xp, u.col(k)) - base) / hstep;
      }
      for (int i = 0; i < 4; ++i) {
        Vec4 up = u.col(k);
        const double hstep = 1e-7 * std::max(1.0, std::abs(up[i]));
        up[i] += hstep;
        b.col(i) = (rk4(model, xs[k], up) - base) / hstep;
      }
      sens = a * sens;
      sens.block<13, 4>(0, 4 * k) += b;
      jac.block<4, 4>(4 * k, 4 * k) = sqrt_w.asDiagonal();
      const E12& sq = (k + 1 == n) ? sqrt_qn : sqrt_q;
      jac.block(4 * n + 12 * k, 0, 12, 4 * n) = sq.asDiagonal() * error_jacobian(xs[k + 1], reference[k + 1]) * sens;
    }
    Eigen::MatrixXd hess = jac.transpose() * jac;
    hess.diagonal().array() += 1e-10;
    const Eigen::VectorXd grad = jac.transpose() * res;
    for (int k = 0; k < n; ++k) {
      lo.segment<4>(4 * k) = c.u_min - u.col(k);
      hi.segment<4>(4 * k) = c.u_max - u.col(k);
    }
    const Eigen::VectorXd delta = box_qp(hess, grad, lo, hi);
    const double predicted = grad.dot(delta) + 0.5 * delta.dot(hess * delta);
    if (-predicted <= c.tolerance * (1.0 + cost)) {
      out.converged = true;
      break;
    }
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 12; ++ls) {
      Eigen::MatrixXd trial = u;
      for (int k = 0; k < n; ++k) trial.col(k) += alpha * delta.segment<4>(4 * k);
      const double trial_cost = rollout(trial, xs_trial, res_trial);
      if (trial_cost < cost + 1e-4 * alpha * predicted) {
        u = trial;
        xs.swap(xs_trial);
        res.swap(res_trial);
        const double prev = cost;
        cost = trial_cost;
        accepted = true;
        if (prev - cost <= c.tolerance * (1.0 + cost)) out.converged = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted || out.converged) {
      out.converged = out.converged || !accepted;
      break;
    }
  }
  warm_ = u;
  out.cost = cost;
  out.u.thrust = u(0, 0);
  out.u.torque = u.block<3, 1>(1, 0);
  return out;
}

NmpcSolution nmpc_solve(const RigidBodyState& x_now, const std::vector<ReferencePoint>& reference,
                        const NmpcConfig& config, const VehicleParams& model, double r) {
  NmpcSolver solver(config);
  return solver.solve(x_now, reference, model, r);
}

// ---------------------------------------------------------------------------

LowPass3::LowPass3(double cutoff_hz, double dt) {
  if (!(cutoff_hz > 0.0) || !(dt > 0.0)) throw std::invalid_argument("filter cutoff and dt must be positive");
  const double tau = 1.0 / (2.0 * std::numbers::pi * cutoff_hz);
  alpha_ = dt / (dt + tau);
}

const Vec3& LowPass3::update(const Vec3& x) {
  y_ += alpha_ * (x - y_);
  return y_;
}

Biquad3::Biquad3(double cutoff_hz, double dt) {
  if (!(cutoff_hz > 0.0) || !(dt > 0.0) || cutoff_hz * dt >= 0.5)
    throw std::invalid_argument("biquad cutoff must lie below Nyquist");
  const double k = std::tan(std::numbers::pi * cutoff_hz * dt);
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k * k);
  b0_ = k * k * norm;
  b1_ = 2.0 * b0_;
  b2_ = b0_;
  a1_ = 2.0 * (k * k - 1.0) * norm;
  a2_ = (1.0 - std::numbers::sqrt2 * k + k * k) * norm;
}

const Vec3& Biquad3::update(const Vec3& x) {
  y_ = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
  x2_ = x1_;
  x1_ = x;
  y2_ = y1_;
  y1_ = y_;
  return y_;
}

void Biquad3::reset() {
  x1_.setZero();
  x2_.setZero();
  y1_.setZero();
  y2_.setZero();
  y_.setZero();
}

Vec3 external_force_raw(double mass, const Vec3& a_meas, double thrust, const Vec3& z_b) {
  const Vec3 g(0.0, 0.0, -kGravity);
  return mass * a_meas - mass * g - thrust * z_b;
}

Vec3 estimate_external_force(double mass, const Vec3& a_meas, double thrust, const Vec3& z_b, LowPass3& filter) {
  return filter.update(external_force_raw(mass, a_meas, thrust, z_b));
}

double compensate_thrust(double thrust, const Vec3& z_b, const Vec3& f_ext) { return (thrust * z_b - f_ext).norm(); }

Vec3 indi_torque(const Vec3& tau_u, const Vec3& omega, const Mat3& inertia, const Vec3& tau_f, const Vec3& wdot_f) {
  const Eigen::LLT<Mat3> llt(inertia);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("inertia must be positive definite");
  const Vec3 wdot_d = llt.solve(tau_u - omega.cross(inertia * omega));
  return tau_f + inertia * (wdot_d - wdot_f);
}

Allocation allocate(double thrust, const Vec3& torque, const Mat4& h, double t_min, double t_max) {
  const Eigen::FullPivLU<Mat4> lu(h);
  if (!lu.isInvertible()) throw std::invalid_argument("allocation matrix is singular");
  Allocation out;
  Vec4 base = lu.solve(Vec4(thrust, 0.0, 0.0, 0.0));
  const Vec4 delta = lu.solve(Vec4(0.0, torque.x(), torque.y(), torque.z()));
  const Vec4 full = base + delta;
  if ((full.array() >= t_min).all() && (full.array() <= t_max).all()) {
    out.thrusts = full;
    return out;
  }
  out.clamped = true;
  if ((base.array() < t_min).any() || (base.array() > t_max).any()) base = base.cwiseMax(t_min).cwiseMin(t_max);
  double s = 1.0;
  for (int j = 0; j < 4; ++j) {
    if (delta[j] > 0.0) s = std::min(s, (t_max - base[j]) / delta[j]);
    if (delta[j] < 0.0) s = std::min(s, (t_min - base[j]) / delta[j]);
  }
  s = std::max(s, 0.0);
  out.torque_scale = s;
  out.thrusts = (base + s * delta).cwiseMax(t_min).cwiseMin(t_max);
  return out;
}

double servo_command(double r_des, double theta, const VehicleParams& params) {
  const double r = std::clamp(r_des, params.r_min, params.r_max);
  const double rate = (params.rho(r) - theta) / params.servo_gamma;
  return std::clamp(rate, -params.servo_rate_max, params.servo_rate_max);
}

}  // namespace morph
