#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <utility>
#include <vector>

namespace morph {

using Vec4 = Eigen::Vector4d;

/// Control-effort order s; pieces have degree 2s - 1.
inline constexpr int kEffortOrder = 3;
inline constexpr int kDegree = 2 * kEffortOrder - 1;
inline constexpr int kCoeffCount = kDegree + 1;

/// Ascending-power coefficients of one piece: row k multiplies t^k, columns
/// are the flat channels (x, y, z, r).
using PieceCoeffs = Eigen::Matrix<double, kCoeffCount, 4>;
/// Boundary value/velocity/acceleration, one column per derivative order.
using BoundaryState = Eigen::Matrix<double, 4, 3>;

/// k-th derivative of the monomial basis [1, t, ..., t^5] at t.
Eigen::Matrix<double, kCoeffCount, 1> basis(double t, int order);

/// Piecewise quintic over the 4-D flat output (x, y, z, r).
class PiecewiseTrajectory {
 public:
  PiecewiseTrajectory() = default;
  PiecewiseTrajectory(std::vector<PieceCoeffs> coeffs, std::vector<double> durations);

  int pieces() const { return static_cast<int>(durations_.size()); }
  const std::vector<double>& durations() const { return durations_; }
  const std::vector<PieceCoeffs>& coefficients() const { return coeffs_; }
  double total_duration() const { return total_; }

  /// Piece index and local time for global t. Junction times map to the
  /// following piece; t = T maps to the end of the last piece.
  std::pair<int, double> locate(double t) const;

  /// order-th derivative at global time t in [0, T]. Throws std::domain_error.
  Vec4 eval(double t, int order) const;
  static Vec4 eval_piece(const PieceCoeffs& c, double t, int order);

  /// Integral of the squared jerk of each channel (exact).
  Vec4 jerk_energy() const;

  /// Uniform sample times at the given rate, plus the final time when it is
  /// not on the grid.
  std::vector<double> sample_times(double rate_hz) const;

  /// t,x,y,z,r then first/second/third derivatives, at 100 Hz.
  void write_samples_csv(std::ostream& out, double rate_hz = 100.0) const;
  /// Text dump: header line, M and s, then per piece its duration and six
  /// coefficient rows, 17 significant digits.
  void write_coefficients(std::ostream& out) const;
  static PiecewiseTrajectory read_coefficients(std::istream& in);

 private:
  std::vector<PieceCoeffs> coeffs_;
  std::vector<double> durations_;
  std::vector<double> starts_;
  double total_ = 0.0;
};

}  // namespace morph
