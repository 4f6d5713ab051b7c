#pragma once

#include <string>
#include <vector>

#include "rbj/cost.hpp"
#include "rbj/netsim.hpp"

namespace rbj {

enum class SolverKind { closed_form, newton };

const char* to_string(SolverKind s);

struct CentralizedSolution {
  Vector x_star;
  double J_star = 0.0;
  std::size_t iterations = 0;
  SolverKind solver = SolverKind::closed_form;
};

/// Weighted least squares through a column-pivoted QR of W^(1/2) A, followed
/// by one step of iterative refinement. Rank-deficient A throws
/// ErrorCode::singular.
CentralizedSolution solve_wls(const QuadraticCost& cost);

/// Unweighted least-squares fit of the stacked model; a reasonable Newton
/// starting point for either family.
Vector least_squares_start(const SeparableCost& cost);

struct NewtonOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-10;  // on ||grad||_inf / (1 + ||grad(x0)||_inf)
  double backtrack = 0.5;
  double armijo = 1e-4;
  /// When the line search can no longer decrease J, the run still counts as
  /// converged if the Newton decrement g^T H^-1 g is below this times 1 + |J|.
  double stall_decrement = 1e-13;
};

/// Damped Newton with Armijo backtracking on the full cost. Once J can no
/// longer resolve the decrease, full steps continue as long as each halves
/// the gradient. Stops on the gradient tolerance or, when neither works, on
/// the decrement test. Throws ErrorCode::not_converged otherwise.
CentralizedSolution solve_newton(const SeparableCost& cost, const Vector& x0,
                                 const NewtonOptions& options = {});

/// Reference minimizer for either family: closed form for quadratic costs,
/// Newton from the least-squares start otherwise.
CentralizedSolution solve_reference(const SeparableCost& cost);

struct RateFit {
  double C = 0.0;
  double rho = 0.0;
  std::size_t first = 0;  // fitted window [first, last]
  std::size_t last = 0;
};

/// Fits err(t) <= C rho^t. The series is cut where it reaches the round-off
/// floor (1e-12 of its peak), log err is regressed on t over the last 60% of
/// what remains, and C is the smallest constant making C rho^t an envelope of
/// the whole series. Throws ErrorCode::no_fit for fewer than 50 records,
/// non-finite values or a non-decreasing error.
RateFit fit_rate(const std::vector<double>& err);
RateFit fit_rate(const RunTrace& trace);

}  // namespace rbj
