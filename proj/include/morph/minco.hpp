#pragma once

#include "morph/trajectory.hpp"

#include <Eigen/Core>

#include <vector>

namespace morph {

/// Dense-in-band square matrix with LU factorization without pivoting.
/// Element (i, j) is stored when -lower <= j - i <= upper.
class BandedSystem {
 public:
  BandedSystem() = default;
  BandedSystem(int n, int lower, int upper);

  int size() const { return n_; }
  double& operator()(int i, int j) { return data_[(i - j + upper_) * n_ + j]; }
  double operator()(int i, int j) const { return data_[(i - j + upper_) * n_ + j]; }
  void set_zero();

  void factorize();
  /// Solves A X = B in place (after factorize).
  void solve(Eigen::MatrixXd& b) const;
  /// Solves A^T X = B in place (after factorize).
  void solve_transpose(Eigen::MatrixXd& b) const;

 private:
  int n_ = 0, lower_ = 0, upper_ = 0;
  std::vector<double> data_;
};

/// Minimum-jerk piecewise quintic through fixed interior waypoints with given
/// durations and full value/velocity/acceleration boundary states.
///
/// The coefficient map solves one banded system of size 6M shared by the four
/// channels. Gradients of any cost of (coefficients, durations) are pulled
/// back to (waypoints, durations) through the adjoint of that system.
class MincoJerk {
 public:
  MincoJerk() = default;

  void set_conditions(const BoundaryState& head, const BoundaryState& tail, int pieces);
  /// waypoints: 4 x (M-1); durations: M positive values.
  void set_parameters(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations);

  int pieces() const { return pieces_; }
  const Eigen::VectorXd& durations() const { return durations_; }
  /// 6M x 4, piece i occupies rows 6i..6i+5.
  const Eigen::MatrixXd& coefficients() const { return coeffs_; }
  PiecewiseTrajectory trajectory() const;

  /// Sum over pieces of the squared jerk integral, per channel.
  Vec4 energy() const;
  /// Adds d(energy . channel_weights)/dc and the explicit d/dT into the given buffers.
  void add_energy_gradient(const Vec4& channel_weights, Eigen::MatrixXd& grad_coeffs,
                           Eigen::VectorXd& grad_durations) const;

  /// Converts gradients wrt (coefficients, durations held fixed) into total
  /// gradients wrt (waypoints, durations).
  void propagate_gradient(const Eigen::MatrixXd& grad_coeffs, const Eigen::VectorXd& grad_durations_partial,
                          Eigen::Matrix4Xd& grad_waypoints, Eigen::VectorXd& grad_durations) const;

 private:
  int pieces_ = 0;
  BoundaryState head_ = BoundaryState::Zero();
  BoundaryState tail_ = BoundaryState::Zero();
  Eigen::VectorXd durations_;
  BandedSystem system_;
  Eigen::MatrixXd coeffs_;
};

/// Convenience wrapper around MincoJerk.
PiecewiseTrajectory minco_construct(const Eigen::Matrix4Xd& waypoints, const Eigen::VectorXd& durations,
                                    const BoundaryState& head, const BoundaryState& tail);

}  // namespace morph
