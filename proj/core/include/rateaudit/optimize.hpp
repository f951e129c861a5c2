#pragma once

#include <functional>
#include <span>
#include <vector>

namespace rateaudit {

struct SimplexOptions {
  int max_iterations = 10000;  // across all restarts
  double f_tol = 1e-10;        // relative spread of simplex values
  double x_tol = 1e-8;         // absolute spread of simplex vertices
  double initial_step = 0.5;
  int max_restarts = 10;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  int restarts = 0;
};

using Objective = std::function<double(std::span<const double>)>;

/// Nelder-Mead simplex descent, restarted from the incumbent until a restart
/// no longer improves the value. Non-finite objective values are treated as +inf.
SimplexResult minimize_simplex(const Objective& f, std::vector<double> x0,
                               const SimplexOptions& options = {});

/// Newton iterations with central-difference derivatives starting from
/// `result.x`. A step is taken only when it lowers the value; stops when the
/// Hessian is not positive definite or no step helps.
void refine_newton(const Objective& f, SimplexResult& result, int max_steps = 25);

}  // namespace rateaudit
