#include "geomm/optimizer.hpp"

#include <cmath>
#include <iostream>

#include "geomm/error.hpp"

namespace geomm {

void SolverOptions::validate() const {
  if (max_iters < 0) throw PreconditionViolation("SolverOptions: max_iters must be >= 0");
  if (!(grad_tol > 0.0) || !(step_tol > 0.0)) throw PreconditionViolation("SolverOptions: tolerances must be > 0");
  if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0) || !(backtrack > 0.0 && backtrack < 1.0))
    throw PreconditionViolation("SolverOptions: line-search factors must lie in (0, 1)");
  if (max_backtracks < 0) throw PreconditionViolation("SolverOptions: max_backtracks must be >= 0");
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::gradient_tolerance: return "gradient_tolerance";
    case Termination::max_iterations: return "max_iterations";
    case Termination::line_search_failure: return "line_search_failure";
  }
  return "unknown";
}

LineSearchResult line_search_armijo(const Problem& problem, const ProductPoint& point, double cost0,
                                    const TangentVector& direction, double slope, double initial_step,
                                    const SolverOptions& opts) {
  if (!(slope < 0.0)) throw PreconditionViolation("line_search_armijo: direction is not a descent direction");
  LineSearchResult res;
  double step = initial_step;
  for (int k = 0; k <= opts.max_backtracks && step >= opts.step_tol; ++k, step *= opts.backtrack) {
    res.backtracks = k;
    ProductPoint trial;
    try {
      trial = retract(point, direction, step);
    } catch (const NumericalError&) {
      continue;
    }
    const double c = problem.cost(trial);
    if (std::isfinite(c) && c <= cost0 + opts.armijo_c1 * step * slope && c < cost0) {
      res.ok = true;
      res.step = step;
      res.point = std::move(trial);
      res.cost = c;
      return res;
    }
  }
  res.point = point;
  res.cost = cost0;
  return res;
}

SolverReport rcg_minimize(const Problem& problem, const ProductPoint& init, const SolverOptions& opts) {
  opts.validate();
  SolverReport rep;
  ProductPoint x = init;
  double f = problem.cost(x);
  if (!std::isfinite(f)) throw NumericalError("rcg_minimize: non-finite cost at the initial point");
  TangentVector eg = problem.euclidean_gradient(x);
  if (!eg.all_finite()) throw NumericalError("rcg_minimize: non-finite gradient at the initial point");
  TangentVector g = egrad_to_rgrad(x, eg);
  double gg = product_inner(x, g, g);
  double gnorm = std::sqrt(std::max(0.0, gg));

  rep.cost_history.push_back(f);
  if (opts.on_iterate) opts.on_iterate(0, x, f);

  TangentVector dir = -g;
  double step0 = gnorm > 0.0 ? 1.0 / gnorm : 1.0;
  int it = 0;
  rep.termination = Termination::max_iterations;
  while (true) {
    if (gnorm <= opts.grad_tol * (1.0 + std::abs(f))) {
      rep.termination = Termination::gradient_tolerance;
      break;
    }
    if (it >= opts.max_iters) {
      rep.termination = Termination::max_iterations;
      break;
    }
    double slope = product_inner(x, g, dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -gg;
    }
    LineSearchResult ls = line_search_armijo(problem, x, f, dir, slope, step0, opts);
    if (!ls.ok) {
      rep.termination = Termination::line_search_failure;
      break;
    }
    ++it;
    ProductPoint x_new = std::move(ls.point);
    const double f_new = ls.cost;
    TangentVector eg_new = problem.euclidean_gradient(x_new);
    if (!eg_new.all_finite()) throw NumericalError("rcg_minimize: non-finite gradient");
    TangentVector g_new = egrad_to_rgrad(x_new, eg_new);
    const double gg_new = product_inner(x_new, g_new, g_new);

    const TangentVector g_old_t = transport(x, x_new, g);
    const TangentVector dir_t = transport(x, x_new, dir);
    double beta = 0.0;
    if (gg > 0.0) beta = std::max(0.0, (gg_new - product_inner(x_new, g_new, g_old_t)) / gg);
    dir = beta > 0.0 ? (-g_new) + beta * dir_t : -g_new;
    if (!(product_inner(x_new, g_new, dir) < 0.0)) dir = -g_new;

    if (opts.verbosity > 0)
      std::cerr << "rcg iter=" << it << " cost=" << f_new << " grad_norm=" << std::sqrt(gg_new)
                << " step=" << ls.step << " beta=" << beta << '\n';

    step0 = 2.0 * ls.step;
    x = std::move(x_new);
    f = f_new;
    g = std::move(g_new);
    gg = gg_new;
    gnorm = std::sqrt(std::max(0.0, gg));
    rep.cost_history.push_back(f);
    if (opts.on_iterate) opts.on_iterate(it, x, f);
  }
  rep.point = std::move(x);
  rep.cost = f;
  rep.grad_norm = gnorm;
  rep.iterations = it;
  return rep;
}

}  // namespace geomm
