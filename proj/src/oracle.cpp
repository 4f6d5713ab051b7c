#include "rbj/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rbj {

const char* to_string(SolverKind s) {
  return s == SolverKind::closed_form ? "closed_form" : "newton";
}

CentralizedSolution solve_wls(const QuadraticCost& cost) {
  const SparseRowMatrix a = cost.stacked_matrix();
  const Vector w = cost.stacked_weights();
  const Vector y = cost.stacked_measurements();
  const Vector sw = w.cwiseSqrt();
  const Matrix wa = sw.asDiagonal() * Matrix(a);
  Eigen::ColPivHouseholderQR<Matrix> qr(wa);
  if (qr.rank() < wa.cols()) {
    throw Error(ErrorCode::singular, "stacked measurement matrix is rank deficient (rank " +
                                         std::to_string(qr.rank()) + " < " +
                                         std::to_string(wa.cols()) + ")");
  }
  const Vector wy = sw.cwiseProduct(y);
  Vector x = qr.solve(wy);
  // One refinement step on the weighted residual.
  x += qr.solve(wy - wa * x);

  CentralizedSolution s;
  s.x_star = std::move(x);
  s.J_star = cost.global_value(s.x_star);
  s.iterations = 1;
  s.solver = SolverKind::closed_form;
  return s;
}

Vector least_squares_start(const SeparableCost& cost) {
  const Matrix a = Matrix(cost.stacked_matrix());
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < a.cols()) {
    throw Error(ErrorCode::singular, "stacked measurement matrix is rank deficient");
  }
  return qr.solve(cost.stacked_measurements());
}

CentralizedSolution solve_newton(const SeparableCost& cost, const Vector& x0,
                                 const NewtonOptions& options) {
  if (x0.size() != static_cast<Eigen::Index>(cost.graph().total_dim())) {
    throw Error(ErrorCode::invalid_argument, "starting point has the wrong dimension");
  }
  Vector x = x0;
  double j = cost.global_value(x);
  Vector g = cost.global_gradient(x);
  const double scale = 1.0 + g.cwiseAbs().maxCoeff();
  const double tol = options.tolerance * scale;

  auto done = [&](std::size_t it) {
    CentralizedSolution s;
    s.x_star = std::move(x);
    s.J_star = j;
    s.iterations = it;
    s.solver = SolverKind::newton;
    return s;
  };
  for (std::size_t it = 0;; ++it) {
    if (g.cwiseAbs().maxCoeff() <= tol) return done(it);
    if (it == options.max_iterations) break;

    const Matrix h = cost.global_hessian(x);
    Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw Error(ErrorCode::singular, "Newton: Hessian is not positive definite");
    }
    const Vector step = ldlt.solve(g);
    const double slope = -g.dot(step);
    double t = 1.0;
    Vector xn = x - step;
    double jn = cost.global_value(xn);
    while (!(jn <= j + options.armijo * t * slope) && t > 1e-20) {
      t *= options.backtrack;
      xn = x - t * step;
      jn = cost.global_value(xn);
    }
    if (!(jn < j)) {
      // J no longer resolves the decrease: keep taking full steps while they
      // shrink the gradient, then fall back to the decrement test.
      xn = x - step;
      Vector gn = cost.global_gradient(xn);
      if (gn.cwiseAbs().maxCoeff() < 0.5 * g.cwiseAbs().maxCoeff()) {
        x = std::move(xn);
        j = cost.global_value(x);
        g = std::move(gn);
        continue;
      }
      if (-slope <= options.stall_decrement * (1.0 + std::abs(j))) return done(it);
      break;
    }
    x = std::move(xn);
    j = jn;
    g = cost.global_gradient(x);
  }
  throw Error(ErrorCode::not_converged,
              "Newton did not reach the gradient tolerance within " +
                  std::to_string(options.max_iterations) + " iterations");
}

CentralizedSolution solve_reference(const SeparableCost& cost) {
  if (const auto* q = dynamic_cast<const QuadraticCost*>(&cost)) return solve_wls(*q);
  return solve_newton(cost, least_squares_start(cost));
}

RateFit fit_rate(const std::vector<double>& err) {
  if (err.size() < 50) {
    throw Error(ErrorCode::no_fit, "need at least 50 records to fit a rate, got " +
                                       std::to_string(err.size()));
  }
  for (double e : err) {
    if (!std::isfinite(e)) throw Error(ErrorCode::no_fit, "error series is not finite");
  }
  const double peak = *std::max_element(err.begin(), err.end());
  if (!(peak > 0.0)) throw Error(ErrorCode::no_fit, "error series is identically zero");
  const double floor = 1e-12 * peak;
  std::size_t end = err.size();
  for (std::size_t t = 0; t < err.size(); ++t) {
    if (err[t] <= floor) {
      end = t;
      break;
    }
  }
  if (end < 10) throw Error(ErrorCode::no_fit, "error collapses before a rate can be fitted");
  const std::size_t first = end - (end * 6) / 10;
  const std::size_t last = end - 1;
  if (last - first + 1 < 5) throw Error(ErrorCode::no_fit, "fit window too short");

  const double n = static_cast<double>(last - first + 1);
  double st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t t = first; t <= last; ++t) {
    const double tt = static_cast<double>(t);
    const double l = std::log(err[t]);
    st += tt;
    sl += l;
    stt += tt * tt;
    stl += tt * l;
  }
  const double slope = (n * stl - st * sl) / (n * stt - st * st);
  const double rho = std::exp(slope);
  if (!(rho < 1.0) || !(err[last] < err.front())) {
    throw Error(ErrorCode::no_fit, "error is not decreasing (fitted rate " + std::to_string(rho) + ")");
  }
  double log_c = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < end; ++t) {
    log_c = std::max(log_c, std::log(err[t]) - static_cast<double>(t) * slope);
  }
  return {std::exp(log_c), rho, first, last};
}

RateFit fit_rate(const RunTrace& trace) {
  if (trace.diverged) throw Error(ErrorCode::no_fit, "run diverged");
  return fit_rate(trace.err_inf);
}

}  // namespace rbj
