#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "geomm/manifolds.hpp"

namespace geomm {

// Smooth cost over a product manifold. `euclidean_gradient` returns the
// gradient of the cost viewed as a function of unconstrained matrices, laid out
// like the point.
struct Problem {
  std::function<double(const ProductPoint&)> cost;
  std::function<TangentVector(const ProductPoint&)> euclidean_gradient;
};

struct SolverOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;     // stop when ||rgrad|| <= grad_tol * (1 + |cost|)
  double step_tol = 1e-10;    // smallest trial step the line search will try
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 25;
  int verbosity = 0;
  // Called after init (iteration 0) and after every accepted step.
  std::function<void(int iteration, const ProductPoint& point, double cost)> on_iterate;

  void validate() const;
};

enum class Termination { gradient_tolerance, max_iterations, line_search_failure };

std::string_view to_string(Termination t);

struct SolverReport {
  ProductPoint point;
  double cost = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<double> cost_history;  // cost at init and after every accepted step
  Termination termination = Termination::max_iterations;
};

struct LineSearchResult {
  double step = 0.0;  // 0 on failure
  bool ok = false;
  ProductPoint point;
  double cost = 0.0;
  int backtracks = 0;
};

// Backtracking Armijo search along `direction` starting from `initial_step`.
// `cost0` and `slope` = <grad, direction> describe the current point; throws
// PreconditionViolation if slope >= 0.
LineSearchResult line_search_armijo(const Problem& problem, const ProductPoint& point, double cost0,
                                    const TangentVector& direction, double slope, double initial_step,
                                    const SolverOptions& opts = {});

// Riemannian conjugate gradient with Polak-Ribiere+ updates and projection
// transport. Throws NumericalError if the cost or gradient at `init` is not finite.
SolverReport rcg_minimize(const Problem& problem, const ProductPoint& init, const SolverOptions& opts = {});

}  // namespace geomm
