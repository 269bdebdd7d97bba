#pragma once

#include <functional>
#include <string>
#include <vector>

namespace faid {

struct OptConfig {
  int max_iterations = 100;
  int history = 8;  // L-BFGS pairs kept
  double grad_tol = 1e-5;  // on the 2-norm of the projected gradient
  /// Largest coordinate move of the first trial step (parameter units).
  double initial_step = 0.01;
  double c1 = 1e-4;
  int max_line_search = 20;

  void validate() const;
};

enum class StopReason { GradientTolerance, MaxIterations, LineSearchFailed, EvaluationFailed };

std::string to_string(StopReason reason);

struct ObjectiveValue {
  double value = 0.0;
  std::vector<double> grad;
};

/// Minimised, never maximised.
using Objective = std::function<ObjectiveValue(const std::vector<double> &)>;

struct OptIteration {
  int iteration = 0;
  std::vector<double> x;
  double value = 0.0;
  double grad_norm = 0.0;  // projected gradient
  double step = 0.0;       // max |x_k - x_{k-1}|
};

struct OptResult {
  std::vector<double> x;
  double value = 0.0;
  std::vector<OptIteration> trace;  // iteration 0 is the starting point
  StopReason stop = StopReason::MaxIterations;
  std::string message;  // evaluation error text when stop == EvaluationFailed
};

/// Projected L-BFGS with backtracking; x0 must lie inside the box. `on_iteration` sees every accepted
/// iterate, including the start. An evaluation failure ends the run with the
/// trace up to the last accepted iterate.
OptResult minimize(const Objective &objective, std::vector<double> x0,
                   const std::vector<double> &lower, const std::vector<double> &upper,
                   const OptConfig &cfg,
                   const std::function<void(const OptIteration &)> &on_iteration = {});

}  // namespace faid
