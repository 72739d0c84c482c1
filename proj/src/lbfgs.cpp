#include "morph/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace morph {

const char* to_string(LbfgsStatus status) {
  switch (status) {
    case LbfgsStatus::kGradientConverged:
      return "gradient-converged";
    case LbfgsStatus::kStalled:
      return "stalled";
    case LbfgsStatus::kMaxIterations:
      return "max-iterations";
    case LbfgsStatus::kLineSearchFailed:
      return "line-search-failed";
  }
  return "unknown";
}

namespace {

struct Pair {
  Eigen::VectorXd s, y;
  double rho;
};

Eigen::VectorXd two_loop(const Eigen::VectorXd& g, const std::deque<Pair>& memory) {
  Eigen::VectorXd q = g;
  std::vector<double> alpha(memory.size());
  for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
    alpha[i] = memory[i].rho * memory[i].s.dot(q);
    q -= alpha[i] * memory[i].y;
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const double beta = memory[i].rho * memory[i].y.dot(q);
    q += (alpha[i] - beta) * memory[i].s;
  }
  return -q;
}

}  // namespace

LbfgsResult lbfgs_minimize(Eigen::VectorXd& x, const Objective& objective, const LbfgsParams& params) {
  LbfgsResult result;
  Eigen::VectorXd g(x.size());
  double f = objective(x, g);
  result.history.push_back(f);
  result.f = f;
  if (g.norm() <= params.g_epsilon * std::max(1.0, x.norm())) {
    result.status = LbfgsStatus::kGradientConverged;
    return result;
  }

  std::deque<Pair> memory;
  Eigen::VectorXd x1(x.size()), g1(x.size());
  for (int iter = 1; iter <= params.max_iterations; ++iter) {
    Eigen::VectorXd d = two_loop(g, memory);
    double gd = g.dot(d);
    if (!(gd < 0.0)) {
      memory.clear();
      d = -g;
      gd = g.dot(d);
    }
    double step = memory.empty() ? std::min(1.0, 1.0 / d.norm()) : 1.0;

    // Bracketing weak-Wolfe search.
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    bool accepted = false;
    double best_f = f, best_step = 0.0;
    Eigen::VectorXd best_x, best_g;
    for (int ls = 0; ls < params.max_linesearch; ++ls) {
      x1 = x + step * d;
      const double f1 = objective(x1, g1);
      if (!std::isfinite(f1) || f1 > f + params.armijo * step * gd) {
        hi = step;
      } else {
        if (f1 < best_f) {
          best_f = f1;
          best_step = step;
          best_x = x1;
          best_g = g1;
        }
        if (g1.dot(d) < params.wolfe * gd) {
          lo = step;
        } else {
          accepted = true;
          best_f = f1;
          best_x = x1;
          best_g = g1;
          break;
        }
      }
      step = std::isinf(hi) ? 2.0 * step : 0.5 * (lo + hi);
      if (step < params.min_step || step > params.max_step) break;
    }
    if (!accepted && best_step == 0.0) {
      result.status = LbfgsStatus::kLineSearchFailed;
      result.iterations = iter - 1;
      return result;
    }

    const Eigen::VectorXd s = best_x - x;
    const Eigen::VectorXd y = best_g - g;
    x = best_x;
    g = best_g;
    f = best_f;
    result.f = f;
    result.iterations = iter;
    result.history.push_back(f);

    const double ys = y.dot(s);
    if (ys > params.cautious * g.norm() * s.squaredNorm() && ys > 0.0) {
      memory.push_back({s, y, 1.0 / ys});
      if (static_cast<int>(memory.size()) > params.memory) memory.pop_front();
    }

    if (g.norm() <= params.g_epsilon * std::max(1.0, x.norm())) {
      result.status = LbfgsStatus::kGradientConverged;
      return result;
    }
    if (params.past > 0 && static_cast<int>(result.history.size()) > params.past) {
      const double prev = result.history[result.history.size() - 1 - params.past];
      if ((prev - f) / std::max(1.0, std::abs(f)) < params.delta) {
        result.status = LbfgsStatus::kStalled;
        return result;
      }
    }
  }
  result.status = LbfgsStatus::kMaxIterations;
  return result;
}

}  // namespace morph
