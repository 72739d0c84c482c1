#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace morph {

struct LbfgsParams {
  int memory = 16;
  /// Stop when ||g|| <= g_epsilon * max(1, ||x||).
  double g_epsilon = 1e-5;
  /// Stop when (f_{k-past} - f_k) / max(1, |f_k|) < delta; 0 disables.
  int past = 3;
  double delta = 1e-9;
  int max_iterations = 2000;
  int max_linesearch = 60;
  double armijo = 1e-4;
  double wolfe = 0.9;
  double min_step = 1e-20;
  double max_step = 1e20;
  /// Curvature pairs with y's < cautious * ||g|| * s's are skipped.
  double cautious = 1e-6;
};

enum class LbfgsStatus { kGradientConverged, kStalled, kMaxIterations, kLineSearchFailed };

const char* to_string(LbfgsStatus status);

struct LbfgsResult {
  double f = 0.0;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::kMaxIterations;
  /// Objective after each accepted iteration (first entry is f(x0)).
  std::vector<double> history;
  bool converged() const { return status == LbfgsStatus::kGradientConverged || status == LbfgsStatus::kStalled; }
};

/// Objective callback: returns f(x) and writes the gradient.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Limited-memory BFGS with a bracketing weak-Wolfe line search, suitable for
/// piecewise-smooth objectives. x is updated in place.
LbfgsResult lbfgs_minimize(Eigen::VectorXd& x, const Objective& objective, const LbfgsParams& params = {});

}  // namespace morph
