#pragma once

// Static problem at fixed λ, solved as an equilibrium of the reduced
// Hamiltonian field, and the hyperbolicity test of that equilibrium.

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trimturn/error.hpp"
#include "trimturn/linalg.hpp"
#include "trimturn/model.hpp"
#include "trimturn/newton.hpp"
#include "trimturn/pmp.hpp"

namespace trimturn {

struct SteadyPoint {
  Vec xbar;
  Vec pxbar;
  Vec ubar;
  Vec lambda;
  Vec trim_velocity;  // g1(x̄) + G2(x̄)ū
  double kkt_residual = 0.0;
  int iterations = 0;
};

struct HyperbolicityReport {
  Matrix matrix;
  Spectrum spectrum;
  bool hyperbolic = false;
  double mu_star = 0.0;
  double threshold = 0.0;
};

struct StaticOptions {
  double tol = 1e-12;
  int max_iters = 100;
};

/// Completes (x̄, p̄_x) into a steady point: feedback, trim velocity, residual.
inline SteadyPoint make_steady_point(const CyclicProblem& pb, Vec x, Vec px, std::span<const double> lambda) {
  SteadyPoint sp;
  sp.lambda.assign(lambda.begin(), lambda.end());
  sp.ubar = optimal_feedback(pb, x, px, lambda);
  sp.trim_velocity = pb.cyclic_drift(x) + pb.cyclic_control(x) * sp.ubar;
  sp.kkt_residual = norm_inf(rbvp_rhs(pb, ReducedState{x, px}, lambda).packed());
  sp.xbar = std::move(x);
  sp.pxbar = std::move(px);
  return sp;
}

/// Newton on rbvp_rhs(x, p_x, λ) = 0. Without an explicit start the shape
/// guess is the midpoint of the boundary data and p_x starts at zero.
inline SteadyPoint solve_static(const CyclicProblem& pb, std::span<const double> lambda,
                                std::optional<Vec> x_init = std::nullopt, std::optional<Vec> px_init = std::nullopt,
                                const StaticOptions& opts = {}) {
  const std::size_t n = pb.dims().n;
  if (lambda.size() != pb.dims().p) fail(ErrorKind::ShapeMismatch, "multiplier size");
  Vec x = x_init.value_or(0.5 * (pb.x0() + pb.xT()));
  Vec px = px_init.value_or(Vec(n, 0.0));
  if (x.size() != n || px.size() != n) fail(ErrorKind::ShapeMismatch, "static initial guess size");
  if (!all_finite(x) || !all_finite(px)) fail(ErrorKind::EvaluatorFailure, "static initial guess not finite");

  const Vec lam(lambda.begin(), lambda.end());
  ResidualMap residual = [&](std::span<const double> z) { return rbvp_rhs(pb, z, lam); };
  NewtonSystem eval = [&](std::span<const double> z) {
    const ReducedState s = ReducedState::unpack(z, n);
    return std::pair{rbvp_rhs(pb, z, lam), dense_solver(linearize_reduced(pb, s, lam))};
  };
  NewtonOptions nopt;
  nopt.tol = opts.tol;
  nopt.max_iters = opts.max_iters;
  nopt.singular_kind = ErrorKind::SingularJacobian;

  Vec z0 = concat({x, px});
  NewtonResult r;
  try {
    r = damped_newton(eval, residual, z0, nopt);
  } catch (const Error& e) {
    // Round-off can keep ‖Z‖ slightly above an absolute 1e-12 when the
    // equilibrium has large entries; accept the Newton limit in that case.
    if (e.kind() != ErrorKind::NewtonStagnation) throw;
    nopt.tol = 1e-10 * std::max(1.0, norm_inf(z0));
    r = damped_newton(eval, residual, z0, nopt);
    // polish from the accepted point, tolerating failure
    try {
      NewtonOptions polish = nopt;
      polish.tol = 1e-13 * std::max(1.0, norm_inf(r.z));
      polish.max_iters = 5;
      r = damped_newton(eval, residual, r.z, polish);
    } catch (const Error&) {
    }
  }
  ReducedState s = ReducedState::unpack(r.z, n);
  SteadyPoint sp = make_steady_point(pb, std::move(s.x), std::move(s.px), lambda);
  sp.iterations = r.iterations;
  return sp;
}

inline HyperbolicityReport check_hyperbolicity(const CyclicProblem& pb, const SteadyPoint& sp) {
  HyperbolicityReport rep;
  rep.matrix = linearize_reduced(pb, ReducedState{sp.xbar, sp.pxbar}, sp.lambda);
  rep.spectrum = eigenvalues(rep.matrix);
  rep.threshold = 1e-8 * std::max(1.0, rep.matrix.norm_inf());
  rep.mu_star = rep.spectrum.gap;
  rep.hyperbolic = rep.spectrum.gap > rep.threshold;
  return rep;
}

struct StaticBranch {
  SteadyPoint point;
  HyperbolicityReport report;
};

struct SeedFailure {
  Vec seed;
  ErrorKind kind;
  std::string message;
};

struct StaticBranches {
  std::vector<StaticBranch> branches;
  std::vector<SeedFailure> failures;
};

inline constexpr double kBranchDedupTol = 1e-6;

/// Runs solve_static from every seed and keeps the distinct equilibria.
inline StaticBranches enumerate_static_branches(const CyclicProblem& pb, std::span<const double> lambda,
                                                const std::vector<Vec>& init_grid, const StaticOptions& opts = {}) {
  if (init_grid.empty()) fail(ErrorKind::ConfigError, "seed grid is empty");
  StaticBranches out;
  for (const Vec& seed : init_grid) {
    try {
      SteadyPoint sp = solve_static(pb, lambda, seed, std::nullopt, opts);
      const Vec key = concat({sp.xbar, sp.pxbar});
      const bool seen = std::any_of(out.branches.begin(), out.branches.end(), [&](const StaticBranch& b) {
        return norm_inf(concat({b.point.xbar, b.point.pxbar}) - key) <= kBranchDedupTol;
      });
      if (seen) continue;
      HyperbolicityReport rep = check_hyperbolicity(pb, sp);
      out.branches.push_back({std::move(sp), std::move(rep)});
    } catch (const Error& e) {
      out.failures.push_back({seed, e.kind(), e.what()});
    }
  }
  std::sort(out.branches.begin(), out.branches.end(),
            [](const StaticBranch& a, const StaticBranch& b) { return a.point.xbar < b.point.xbar; });
  return out;
}

}  // namespace trimturn
