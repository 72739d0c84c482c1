#include "morph/trajectory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace morph {

Eigen::Matrix<double, kCoeffCount, 1> basis(double t, int order) {
  Eigen::Matrix<double, kCoeffCount, 1> b = Eigen::Matrix<double, kCoeffCount, 1>::Zero();
  for (int k = order; k < kCoeffCount; ++k) {
    double factor = 1.0;
    for (int m = 0; m < order; ++m) factor *= double(k - m);
    b[k] = factor * std::pow(t, k - order);
  }
  return b;
}

PiecewiseTrajectory::PiecewiseTrajectory(std::vector<PieceCoeffs> coeffs, std::vector<double> durations)
    : coeffs_(std::move(coeffs)), durations_(std::move(durations)) {
  if (coeffs_.size() != durations_.size() || durations_.empty())
    throw std::invalid_argument("trajectory needs one coefficient block per positive duration");
  starts_.reserve(durations_.size());
  for (const double d : durations_) {
    if (!(d > 0.0)) throw std::domain_error("piece durations must be positive");
    starts_.push_back(total_);
    total_ += d;
  }
}

std::pair<int, double> PiecewiseTrajectory::locate(double t) const {
  const auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
  int i = static_cast<int>(it - starts_.begin()) - 1;
  i = std::clamp(i, 0, pieces() - 1);
  const double local = std::clamp(t - starts_[i], 0.0, durations_[i]);
  return {i, local};
}

Vec4 PiecewiseTrajectory::eval_piece(const PieceCoeffs& c, double t, int order) {
  return c.transpose() * basis(t, order);
}

Vec4 PiecewiseTrajectory::eval(double t, int order) const {
  if (coeffs_.empty()) throw std::domain_error("empty trajectory");
  if (!(t >= 0.0 && t <= total_)) throw std::domain_error(fmt::format("t = {} outside [0, {}]", t, total_));
  if (order < 0 || order > kDegree) throw std::domain_error("derivative order outside [0, 5]");
  const auto [i, local] = locate(t);
  return eval_piece(coeffs_[i], local, order);
}

Vec4 PiecewiseTrajectory::jerk_energy() const {
  Vec4 e = Vec4::Zero();
  for (int i = 0; i < pieces(); ++i) {
    const double T = durations_[i];
    const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
    const auto& c = coeffs_[i];
    for (int ch = 0; ch < 4; ++ch) {
      const double c3 = c(3, ch), c4 = c(4, ch), c5 = c(5, ch);
      e[ch] += 36.0 * c3 * c3 * T + 144.0 * c3 * c4 * T2 + (192.0 * c4 * c4 + 240.0 * c3 * c5) * T3 +
               720.0 * c4 * c5 * T4 + 720.0 * c5 * c5 * T5;
    }
  }
  return e;
}

std::vector<double> PiecewiseTrajectory::sample_times(double rate_hz) const {
  std::vector<double> out;
  const double dt = 1.0 / rate_hz;
  const auto n = static_cast<long>(std::floor(total_ * rate_hz + 1e-9));
  for (long k = 0; k <= n; ++k) out.push_back(std::min(total_, k * dt));
  if (total_ - out.back() > 1e-9) out.push_back(total_);
  return out;
}

void PiecewiseTrajectory::write_samples_csv(std::ostream& out, double rate_hz) const {
  out << "t,x,y,z,r,vx,vy,vz,vr,ax,ay,az,ar,jx,jy,jz,jr\n";
  for (const double t : sample_times(rate_hz)) {
    std::string line = fmt::format("{:.17g}", t);
    for (int order = 0; order <= 3; ++order) {
      const Vec4 d = eval(t, order);
      for (int ch = 0; ch < 4; ++ch) line += fmt::format(",{:.17g}", d[ch]);
    }
    out << line << '\n';
  }
}

void PiecewiseTrajectory::write_coefficients(std::ostream& out) const {
  out << "# morphplan piecewise polynomial: channels x y z r, ascending powers\n";
  out << fmt::format("{} {}\n", pieces(), kEffortOrder);
  for (int i = 0; i < pieces(); ++i) {
    out << fmt::format("{:.17g}\n", durations_[i]);
    for (int k = 0; k < kCoeffCount; ++k) {
      out << fmt::format("{:.17g} {:.17g} {:.17g} {:.17g}\n", coeffs_[i](k, 0), coeffs_[i](k, 1), coeffs_[i](k, 2),
                         coeffs_[i](k, 3));
    }
  }
}

PiecewiseTrajectory PiecewiseTrajectory::read_coefficients(std::istream& in) {
  std::string line;
  std::stringstream body;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    body << line << '\n';
  }
  int m = 0, s = 0;
  if (!(body >> m >> s) || m < 1 || s != kEffortOrder) throw std::runtime_error("malformed coefficient dump header");
  std::vector<PieceCoeffs> coeffs(m);
  std::vector<double> durations(m);
  for (int i = 0; i < m; ++i) {
    if (!(body >> durations[i])) throw std::runtime_error("malformed coefficient dump: missing duration");
    for (int k = 0; k < kCoeffCount; ++k)
      for (int ch = 0; ch < 4; ++ch)
        if (!(body >> coeffs[i](k, ch))) throw std::runtime_error("malformed coefficient dump: missing coefficient");
  }
  return PiecewiseTrajectory(std::move(coeffs), std::move(durations));
}

}  // namespace morph
