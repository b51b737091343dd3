#pragma once

// Damped Newton iteration with Armijo backtracking on ½‖F‖².

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "trimturn/error.hpp"
#include "trimturn/linalg.hpp"

namespace trimturn {

struct NewtonOptions {
  double tol = 1e-9;  // on ‖F‖₂
  int max_iters = 100;
  double backtrack = 0.5;
  double armijo = 1e-4;
  double min_step = std::ldexp(1.0, -20);
  ErrorKind singular_kind = ErrorKind::SingularJacobian;
  std::function<void(int iteration, double step, double residual)> progress;
};

struct NewtonResult {
  Vec z;
  double residual_norm = 0.0;
  int iterations = 0;
};

using ResidualMap = std::function<Vec(std::span<const double>)>;
/// Solves J(z)·dz = rhs for the Jacobian at the point the system was built.
using LinearSolve = std::function<Vec(std::span<const double>)>;
/// Residual and factored Jacobian at one point.
using NewtonSystem = std::function<std::pair<Vec, LinearSolve>(std::span<const double>)>;

inline LinearSolve dense_solver(Matrix jac) {
  auto lu = std::make_shared<LuDecomposition>(std::move(jac));
  return [lu](std::span<const double> rhs) { return lu->solve(rhs); };
}

/// Solves F(z) = 0. A trial point whose evaluation throws a solver error
/// (blow-up, pole, radius collapse, ...) counts as a rejected step.
inline NewtonResult damped_newton(const NewtonSystem& system, const ResidualMap& residual, Vec z,
                                  const NewtonOptions& opt) {
  auto build = [&](std::span<const double> at) {
    try {
      return system(at);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::SingularMatrix) fail(opt.singular_kind, e.what());
      throw;
    }
  };
  auto [f, solve] = build(z);
  double norm = norm2(f);
  int it = 0;
  while (norm > opt.tol) {
    if (it >= opt.max_iters) {
      std::ostringstream msg;
      msg << "no convergence after " << it << " iterations, residual " << norm;
      fail(ErrorKind::NewtonStagnation, msg.str());
    }
    const Vec dz = solve(f);
    const double phi0 = 0.5 * norm * norm;
    double step = 1.0;
    bool accepted = false;
    Vec trial(z.size());
    while (step >= opt.min_step) {
      for (std::size_t i = 0; i < z.size(); ++i) trial[i] = z[i] - step * dz[i];
      bool ok = true;
      double n = 0.0;
      try {
        const Vec ft = residual(trial);
        ok = all_finite(ft);
        n = norm2(ft);
      } catch (const Error&) {
        ok = false;
      }
      // the slope of ½‖F‖² along −dz is −‖F‖²
      if (ok && 0.5 * n * n <= (1.0 - 2.0 * opt.armijo * step) * phi0) {
        accepted = true;
        break;
      }
      step *= opt.backtrack;
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "line search failed at iteration " << it << ", residual " << norm;
      fail(ErrorKind::NewtonStagnation, msg.str());
    }
    z = trial;
    ++it;
    std::tie(f, solve) = build(z);
    norm = norm2(f);
    if (opt.progress) opt.progress(it, step, norm);
  }
  return {std::move(z), norm, it};
}

}  // namespace trimturn
