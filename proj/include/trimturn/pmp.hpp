#pragma once

// Pontryagin objects for the cyclic problem class (normal case, p⁰ = 1).
//
// With λ the constant adjoint of y, the optimal control is
//   u* = −R⁻¹(F2(x)ᵀp_x + G2(x)ᵀλ)
// and the (x, p_x) subsystem closes on itself: the reduced field is the
// canonical field of H^λ(x, p_x, u*) with u* held fixed under differentiation.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "trimturn/error.hpp"
#include "trimturn/integrate.hpp"
#include "trimturn/linalg.hpp"
#include "trimturn/model.hpp"

namespace trimturn {

struct ReducedState {
  Vec x;
  Vec px;

  Vec packed() const { return concat({x, px}); }
  static ReducedState unpack(std::span<const double> z, std::size_t n) {
    return {Vec(z.begin(), z.begin() + n), Vec(z.begin() + n, z.begin() + 2 * n)};
  }
};

namespace detail {

inline void check_sizes(const CyclicProblem& pb, std::span<const double> x, std::span<const double> px,
                        std::span<const double> lambda) {
  const Dims& d = pb.dims();
  if (x.size() != d.n || px.size() != d.n || lambda.size() != d.p) {
    fail(ErrorKind::ShapeMismatch, "state/adjoint/multiplier sizes do not match the problem");
  }
}

}  // namespace detail

/// H = p_xᵀ(f1 + F2u) + λᵀ(g1 + G2u) + f0 + ½uᵀRu
inline double hamiltonian(const CyclicProblem& pb, std::span<const double> x, std::span<const double> px,
                          std::span<const double> lambda, std::span<const double> u) {
  detail::check_sizes(pb, x, px, lambda);
  if (u.size() != pb.dims().m) fail(ErrorKind::ShapeMismatch, "control size");
  const Vec xdot = pb.shape_drift(x) + pb.shape_control(x) * u;
  const Vec ydot = pb.cyclic_drift(x) + pb.cyclic_control(x) * u;
  const Vec ru = pb.control_weight() * u;
  return dot(px, xdot) + dot(lambda, ydot) + pb.running_cost(x) + 0.5 * dot(u, ru);
}

/// Hamiltonian of the reduced problem at fixed λ, grouped as cost first:
/// f0 + ½uᵀRu + λᵀ(g1 + G2u) + p_xᵀ(f1 + F2u).
inline double rocp_hamiltonian(const CyclicProblem& pb, std::span<const double> x, std::span<const double> px,
                               std::span<const double> lambda, std::span<const double> u) {
  detail::check_sizes(pb, x, px, lambda);
  if (u.size() != pb.dims().m) fail(ErrorKind::ShapeMismatch, "control size");
  const Vec ru = pb.control_weight() * u;
  double h = pb.running_cost(x) + 0.5 * dot(u, ru);
  h += dot(lambda, pb.cyclic_drift(x) + pb.cyclic_control(x) * u);
  h += dot(px, pb.shape_drift(x) + pb.shape_control(x) * u);
  return h;
}

inline Vec optimal_feedback(const CyclicProblem& pb, std::span<const double> x, std::span<const double> px,
                            std::span<const double> lambda) {
  detail::check_sizes(pb, x, px, lambda);
  Vec g = transpose_times(pb.shape_control(x), px) + transpose_times(pb.cyclic_control(x), lambda);
  Vec u = pb.solve_weight(g);
  for (double& v : u) v = -v;
  return u;
}

/// H evaluated at the optimal feedback.
inline double feedback_hamiltonian(const CyclicProblem& pb, std::span<const double> x, std::span<const double> px,
                                   std::span<const double> lambda) {
  const Vec u = optimal_feedback(pb, x, px, lambda);
  return hamiltonian(pb, x, px, lambda, u);
}

namespace detail {

struct FieldParts {
  Vec xdot, ydot, pxdot, u;
};

// Shared by the full and reduced right-hand sides.
inline FieldParts field_parts(const CyclicProblem& pb, std::span<const double> x, std::span<const double> px,
                              std::span<const double> lambda, bool with_cyclic) {
  detail::check_sizes(pb, x, px, lambda);
  FieldParts parts;
  const Matrix f2 = pb.shape_control(x);
  const Matrix g2 = pb.cyclic_control(x);
  {
    Vec g = transpose_times(f2, px) + transpose_times(g2, lambda);
    parts.u = pb.solve_weight(g);
    for (double& v : parts.u) v = -v;
  }
  const Vec& u = parts.u;
  parts.xdot = pb.shape_drift(x) + f2 * u;
  if (with_cyclic) parts.ydot = pb.cyclic_drift(x) + g2 * u;

  Vec pd = pb.running_cost_gradient(x);
  pd = pd + transpose_times(pb.shape_drift_jacobian(x), px);
  pd = pd + pb.shape_control_gradient(x, px, u);
  pd = pd + transpose_times(pb.cyclic_drift_jacobian(x), lambda);
  pd = pd + pb.cyclic_control_gradient(x, lambda, u);
  for (double& v : pd) v = -v;
  parts.pxdot = std::move(pd);
  return parts;
}

}  // namespace detail

/// Reduced field at fixed λ; returns (ẋ, ṗ_x).
inline ReducedState rbvp_rhs(const CyclicProblem& pb, const ReducedState& s, std::span<const double> lambda) {
  auto parts = detail::field_parts(pb, s.x, s.px, lambda, false);
  return {std::move(parts.xdot), std::move(parts.pxdot)};
}

/// Packed variant on z = (x, p_x).
inline Vec rbvp_rhs(const CyclicProblem& pb, std::span<const double> z, std::span<const double> lambda) {
  const std::size_t n = pb.dims().n;
  if (z.size() != 2 * n) fail(ErrorKind::ShapeMismatch, "reduced state size");
  auto parts = detail::field_parts(pb, z.subspan(0, n), z.subspan(n, n), lambda, false);
  return concat({parts.xdot, parts.pxdot});
}

/// Full field on z = (x, y, p_x); returns (ẋ, ẏ, ṗ_x).
inline Vec fbvp_rhs(const CyclicProblem& pb, std::span<const double> z, std::span<const double> lambda) {
  const Dims& d = pb.dims();
  if (z.size() != 2 * d.n + d.p) fail(ErrorKind::ShapeMismatch, "full state size");
  auto parts = detail::field_parts(pb, z.subspan(0, d.n), z.subspan(d.n + d.p, d.n), lambda, true);
  return concat({parts.xdot, parts.ydot, parts.pxdot});
}

/// Jacobian of the reduced field with respect to (x, p_x) by central
/// differences with relative step 1e-6.
inline Matrix linearize_reduced_fd(const CyclicProblem& pb, const ReducedState& s, std::span<const double> lambda) {
  const Vec lam(lambda.begin(), lambda.end());
  const Vec z = s.packed();
  return jacobian([&](std::span<const double> w) { return rbvp_rhs(pb, w, lam); }, z);
}

/// Jacobian of the reduced field; analytic when the problem supplies it.
inline Matrix linearize_reduced(const CyclicProblem& pb, const ReducedState& s, std::span<const double> lambda) {
  detail::check_sizes(pb, s.x, s.px, lambda);
  if (pb.has_reduced_jacobian()) {
    Matrix j = pb.data().reduced_jacobian(s.x, s.px, lambda);
    const std::size_t n2 = 2 * pb.dims().n;
    if (j.rows() != n2 || j.cols() != n2) fail(ErrorKind::ShapeMismatch, "reduced Jacobian shape");
    if (!j.all_finite()) fail(ErrorKind::EvaluatorFailure, "reduced Jacobian not finite");
    return j;
  }
  return linearize_reduced_fd(pb, s, lambda);
}

/// Condition number of the control weight (diagnostic only).
inline double weight_condition(const CyclicProblem& pb) {
  const Spectrum s = eigenvalues(pb.control_weight());
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (auto ev : s.eigenvalues) {
    lo = std::min(lo, ev.real());
    hi = std::max(hi, ev.real());
  }
  return hi / lo;
}

namespace detail {

// ∫_{lo}^{hi} (s − a)(s − b) ds
inline double quad_poly(double lo, double hi, double a, double b) {
  auto prim = [&](double s) { return s * s * s / 3.0 - (a + b) * s * s / 2.0 + a * b * s; };
  return prim(hi) - prim(lo);
}

// Weights of the quadratic interpolant through (0, h1, h1+h2) integrated over [lo, hi].
inline std::array<double, 3> quadratic_weights(double h1, double h2, double lo, double hi) {
  const double t1 = h1, t2 = h1 + h2;
  return {quad_poly(lo, hi, t1, t2) / (t1 * t2), quad_poly(lo, hi, 0.0, t2) / (t1 * (t1 - t2)),
          quad_poly(lo, hi, 0.0, t1) / (t2 * (t2 - t1))};
}

}  // namespace detail

/// Cumulative composite Simpson integration of samples on a (possibly
/// non-uniform) grid; returns the running integral at every node.
inline std::vector<Vec> cumulative_simpson(std::span<const double> times, const std::vector<Vec>& values) {
  const std::size_t n = times.size();
  if (n < 3) fail(ErrorKind::GridTooCoarse, "Simpson quadrature needs at least 3 nodes");
  const std::size_t dim = values.front().size();
  std::vector<Vec> out(n, Vec(dim, 0.0));
  for (std::size_t k = 0; k + 2 < n || k + 1 < n; k += 2) {
    // use the panel [k, k+2], or the last three nodes when only one interval is left
    const std::size_t base = (k + 2 < n) ? k : n - 3;
    const double h1 = times[base + 1] - times[base];
    const double h2 = times[base + 2] - times[base + 1];
    const double o = times[k] - times[base];
    const double seg1 = times[k + 1] - times[base];
    const auto w1 = detail::quadratic_weights(h1, h2, o, seg1);
    for (std::size_t i = 0; i < dim; ++i)
      out[k + 1][i] = out[k][i] + w1[0] * values[base][i] + w1[1] * values[base + 1][i] + w1[2] * values[base + 2][i];
    if (k + 2 < n) {
      const auto w2 = detail::quadratic_weights(h1, h2, 0.0, h1 + h2);
      for (std::size_t i = 0; i < dim; ++i)
        out[k + 2][i] = out[k][i] + w2[0] * values[base][i] + w2[1] * values[base + 1][i] + w2[2] * values[base + 2][i];
    }
  }
  return out;
}

/// Reconstructs y(t) from a reduced trajectory (states packed (x, p_x)) by
/// integrating ẏ = g1(x) + G2(x)u* from y(0) = y0.
inline Trajectory reconstruct_cyclic(const CyclicProblem& pb, const Trajectory& reduced, std::span<const double> lambda,
                                     std::span<const double> y0) {
  if (reduced.size() < 3) fail(ErrorKind::GridTooCoarse, "reconstruction needs at least 3 nodes");
  const std::size_t n = pb.dims().n;
  std::vector<Vec> rates;
  rates.reserve(reduced.size());
  for (const auto& z : reduced.states) {
    std::span<const double> zs(z);
    const Vec x(zs.begin(), zs.begin() + n);
    const Vec u = optimal_feedback(pb, x, zs.subspan(n, n), lambda);
    rates.push_back(pb.cyclic_drift(x) + pb.cyclic_control(x) * u);
  }
  std::vector<Vec> acc = cumulative_simpson(reduced.times, rates);
  Trajectory y;
  y.times = reduced.times;
  y.states.reserve(acc.size());
  for (auto& a : acc) y.states.push_back(Vec(y0.begin(), y0.end()) + a);
  return y;
}

struct EndpointOptions {
  IntegratorOptions integrator;
  std::size_t intervals = 2400;
};

struct EndpointResult {
  Vec x_end;
  Vec y_end;
  Trajectory reduced;  // (x, p_x)
  Trajectory cyclic;   // y
};

/// Integrates the reduced field from (x0, p_x(0)) over [0, T] and reconstructs
/// the cyclic chain; realizes the endpoint map λ ↦ (x(T), y(T)).
inline EndpointResult endpoint_map(const CyclicProblem& pb, std::span<const double> lambda,
                                   std::span<const double> px0, const EndpointOptions& opts = {}) {
  const std::size_t n = pb.dims().n;
  if (px0.size() != n) fail(ErrorKind::ShapeMismatch, "initial adjoint size");
  const Vec lam(lambda.begin(), lambda.end());
  const Vec z0 = concat({pb.x0(), px0});
  EndpointResult r;
  r.reduced = integrate([&](std::span<const double> z) { return rbvp_rhs(pb, z, lam); }, z0, 0.0, pb.horizon(),
                        opts.integrator, opts.intervals);
  r.cyclic = reconstruct_cyclic(pb, r.reduced, lam, pb.y0());
  r.x_end = Vec(r.reduced.back().begin(), r.reduced.back().begin() + n);
  r.y_end = r.cyclic.back();
  return r;
}

}  // namespace trimturn
