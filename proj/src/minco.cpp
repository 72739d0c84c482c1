#include "morph/minco.hpp"

#include <algorithm>
#include <stdexcept>

namespace morph {

BandedSystem::BandedSystem(int n, int lower, int upper)
    : n_(n), lower_(lower), upper_(upper), data_(static_cast<std::size_t>(n) * (lower + upper + 1), 0.0) {}

void BandedSystem::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

void BandedSystem::factorize() {
  for (int k = 0; k + 1 < n_; ++k) {
    const int i_max = std::min(k + lower_, n_ - 1);
    const double pivot = (*this)(k, k);
    if (pivot == 0.0) throw std::runtime_error("banded system: zero pivot");
    for (int i = k + 1; i <= i_max; ++i) {
      if ((*this)(i, k) != 0.0) (*this)(i, k) /= pivot;
    }
    const int j_max = std::min(k + upper_, n_ - 1);
    for (int j = k + 1; j <= j_max; ++j) {
      const double u = (*this)(k, j);
      if (u == 0.0) continue;
      for (int i = k + 1; i <= i_max; ++i) {
        const double l = (*this)(i, k);
        if (l != 0.0) (*this)(i, j) -= l * u;
      }
    }
  }
}

void BandedSystem::solve(Eigen::MatrixXd& b) const {
  for (int j = 0; j < n_; ++j) {
    const int i_max = std::min(j + lower_, n_ - 1);
    for (int i = j + 1; i <= i_max; ++i) {
      const double l = (*this)(i, j);
      if (l != 0.0) b.row(i) -= l * b.row(j);
    }
  }
  for (int j = n_ - 1; j >= 0; --j) {
    b.row(j) /= (*this)(j, j);
    const int i_min = std::max(0, j - upper_);
    for (int i = i_min; i < j; ++i) {
      const double u = (*this)(i, j);
      if (u != 0.0) b.row(i) -= u * b.row(j);
    }
  }
}

void BandedSystem::solve_transpose(Eigen::MatrixXd& b) const {
  // A^T = U^T L^T: forward with U^T, backward with L^T (unit diagonal).
  for (int j = 0; j < n_; ++j) {
    b.row(j) /= (*this)(j, j);
    const int i_max = std::min(j + upper_, n_ - 1);
    for (int i = j + 1; i <= i_max; ++i) {
      const double u = (*this)(j, i);
      if (u != 0.0) b.row(i) -= u * b.row(j);
    }
  }
  for (int j = n_ - 1; j >= 0; --j) {
    const int i_min = std::max(0, j - lower_);
    for (int i = i_min; i < j; ++i) {
      const double l = (*this)(j, i);
      if (l != 0.0) b.row(i) -= l * b.row(j);
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

// Derivative order of each junction row, in row order 6i+3 .. 6i+8.
constexpr int kJunctionOrders[6] = {3, 4, 0, 0, 1, 2};

}  // namespace

void MincoJerk::set_conditions(const BoundaryState& head, const BoundaryState& tail, int pieces) {
  if (pieces < 1) throw std::invalid_argument("need at least one piece");
  head_ = head;
  tail_ = tail;
  pieces_ = pieces;
  system_ = BandedSystem(kCoeffCount * pieces, kCoeffCount, kCoeffCount);
  coeffs_.setZero(kCoeffCount * pieces, 4);
}

void MincoJerk::set_parameters(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations) {
  const int m = pieces_;
  if (durations.size() != m || waypoints.cols() != m - 1)
    throw std::invalid_argument("waypoint/duration count does not match piece count");
  for (int i = 0; i < m; ++i)
    if (!(durations[i] > 0.0)) throw std::domain_error("piece durations must be positive");
  durations_ = durations;

  system_.set_zero();
  Eigen::MatrixXd& b = coeffs_;
  b.setZero(kCoeffCount * m, 4);

  for (int d = 0; d < 3; ++d) {
    const auto row = basis(0.0, d);
    system_(d, d) = row[d];
    b.row(d) = head_.col(d).transpose();
  }
  for (int i = 0; i + 1 < m; ++i) {
    const double T = durations[i];
    const int r0 = kCoeffCount * i + 3;
    const int col = kCoeffCount * i;
    const int next = kCoeffCount * (i + 1);
    for (int k = 0; k < 6; ++k) {
      const int d = kJunctionOrders[k];
      const int r = r0 + k;
      const auto at_end = basis(T, d);
      for (int c = d; c < kCoeffCount; ++c) system_(r, col + c) = at_end[c];
      if (k == 2) {
        b.row(r) = waypoints.col(i).transpose();
      } else {
        system_(r, next + d) = -basis(0.0, d)[d];
      }
    }
  }
  {
    const double T = durations[m - 1];
    const int col = kCoeffCount * (m - 1);
    for (int d = 0; d < 3; ++d) {
      const int r = kCoeffCount * m - 3 + d;
      const auto at_end = basis(T, d);
      for (int c = d; c < kCoeffCount; ++c) system_(r, col + c) = at_end[c];
      b.row(r) = tail_.col(d).transpose();
    }
  }
  system_.factorize();
  system_.solve(b);
}

PiecewiseTrajectory MincoJerk::trajectory() const {
  std::vector<PieceCoeffs> pieces(pieces_);
  std::vector<double> durations(pieces_);
  for (int i = 0; i < pieces_; ++i) {
    pieces[i] = coeffs_.block<kCoeffCount, 4>(kCoeffCount * i, 0);
    durations[i] = durations_[i];
  }
  return PiecewiseTrajectory(std::move(pieces), std::move(durations));
}

Vec4 MincoJerk::energy() const {
  Vec4 e = Vec4::Zero();
  for (int i = 0; i < pieces_; ++i) {
    const double T = durations_[i];
    const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
    for (int ch = 0; ch < 4; ++ch) {
      const double c3 = coeffs_(6 * i + 3, ch), c4 = coeffs_(6 * i + 4, ch), c5 = coeffs_(6 * i + 5, ch);
      e[ch] += 36.0 * c3 * c3 * T + 144.0 * c3 * c4 * T2 + (192.0 * c4 * c4 + 240.0 * c3 * c5) * T3 +
               720.0 * c4 * c5 * T4 + 720.0 * c5 * c5 * T5;
    }
  }
  return e;
}

void MincoJerk::add_energy_gradient(const Vec4& channel_weights, Eigen::MatrixXd& grad_coeffs,
                                    Eigen::VectorXd& grad_durations) const {
  for (int i = 0; i < pieces_; ++i) {
    const double T = durations_[i];
    const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
    for (int ch = 0; ch < 4; ++ch) {
      const double w = channel_weights[ch];
      if (w == 0.0) continue;
      const double c3 = coeffs_(6 * i + 3, ch), c4 = coeffs_(6 * i + 4, ch), c5 = coeffs_(6 * i + 5, ch);
      grad_coeffs(6 * i + 3, ch) += w * (72.0 * c3 * T + 144.0 * c4 * T2 + 240.0 * c5 * T3);
      grad_coeffs(6 * i + 4, ch) += w * (144.0 * c3 * T2 + 384.0 * c4 * T3 + 720.0 * c5 * T4);
      grad_coeffs(6 * i + 5, ch) += w * (240.0 * c3 * T3 + 720.0 * c4 * T4 + 1440.0 * c5 * T5);
      const double jerk_end = 6.0 * c3 + 24.0 * c4 * T + 60.0 * c5 * T2;
      grad_durations[i] += w * jerk_end * jerk_end;
    }
  }
}

void MincoJerk::propagate_gradient(const Eigen::MatrixXd& grad_coeffs, const Eigen::VectorXd& grad_durations_partial,
                                   Eigen::Matrix4Xd& grad_waypoints, Eigen::VectorXd& grad_durations) const {
  const int m = pieces_;
  Eigen::MatrixXd adjoint = grad_coeffs;
  system_.solve_transpose(adjoint);

  grad_waypoints.resize(4, m - 1);
  for (int i = 0; i + 1 < m; ++i) grad_waypoints.col(i) = adjoint.row(kCoeffCount * i + 5).transpose();

  grad_durations = grad_durations_partial;
  for (int i = 0; i < m; ++i) {
    const PieceCoeffs c = coeffs_.block<kCoeffCount, 4>(kCoeffCount * i, 0);
    const double T = durations_[i];
    if (i + 1 < m) {
      for (int k = 0; k < 6; ++k) {
        const Vec4 deriv = PiecewiseTrajectory::eval_piece(c, T, kJunctionOrders[k] + 1);
        grad_durations[i] -= adjoint.row(kCoeffCount * i + 3 + k).dot(deriv.transpose());
      }
    } else {
      for (int d = 0; d < 3; ++d) {
        const Vec4 deriv = PiecewiseTrajectory::eval_piece(c, T, d + 1);
        grad_durations[i] -= adjoint.row(kCoeffCount * m - 3 + d).dot(deriv.transpose());
      }
    }
  }
}

PiecewiseTrajectory minco_construct(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations,
                                    const BoundaryState& head, const BoundaryState& tail) {
  MincoJerk minco;
  minco.set_conditions(head, tail, static_cast<int>(durations.size()));
  minco.set_parameters(waypoints, durations);
  return minco.trajectory();
}

}  // namespace morph
