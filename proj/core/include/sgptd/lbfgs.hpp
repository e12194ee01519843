#pragma once

#include <functional>
#include <vector>

#include <sgptd/common.hpp>

namespace sgptd {

struct LbfgsOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-5;
  int history = 8;
  double sufficient_decrease = 1e-4;  // Wolfe c1
  double curvature = 0.9;             // Wolfe c2
  int max_line_search_steps = 30;
};

struct LbfgsResult {
  Vector x;
  double f = 0.0;
  Vector grad;
  int iterations = 0;
  bool converged = false;  // gradient tolerance reached
  std::vector<double> trace;  // objective at init and after each accepted step
};

/// Objective callable: returns f(x) and fills grad. An infeasible point is
/// signalled by returning a non-finite value; the line search then backs
/// off toward the last feasible point.
using LbfgsObjective = std::function<double(const Vector&, Vector&)>;

/// Limited-memory quasi-Newton minimization with a strong-Wolfe line
/// search. Deterministic; the trace is strictly decreasing over accepted
/// steps. When no decreasing step can be found the best point seen so far
/// is returned with converged = false.
LbfgsResult minimize(const LbfgsObjective& objective, Vector x0,
                     const LbfgsOptions& options = {});

}  // namespace sgptd
