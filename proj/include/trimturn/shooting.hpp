#pragma once

// Multiple shooting for the full optimality system. The unknowns are
// p_x(0), λ and the full states (x, y, p_x) at interior nodes; the residual
// stacks continuity defects and the terminal conditions x(T) = x_T,
// y(T) = y_T, so the implicit equation for λ is solved in the same loop.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trimturn/error.hpp"
#include "trimturn/integrate.hpp"
#include "trimturn/linalg.hpp"
#include "trimturn/model.hpp"
#include "trimturn/newton.hpp"
#include "trimturn/pmp.hpp"
#include "trimturn/steady.hpp"

namespace trimturn {

enum class JacobianMode { Sensitivity, FiniteDifference };

/// Full-state profile t ↦ (x, y, p_x) used to seed interior nodes.
using StateProfile = std::function<Vec(double)>;

struct InitialGuess {
  Vec px0;
  Vec lambda;
  std::vector<Vec> segment_states;  // interior nodes, (x, y, p_x) each
  StateProfile profile;             // used when segment_states is empty
};

inline IntegratorOptions solve_integrator_defaults() {
  IntegratorOptions o;
  o.abs_tol = 1e-12;
  o.rel_tol = 1e-11;
  // a healthy segment needs a few thousand steps; trial points far off the
  // extremal otherwise crawl toward a singularity and dominate the runtime
  o.max_steps = 20'000;
  return o;
}

inline IntegratorOptions stage_integrator_defaults() {
  IntegratorOptions o;
  o.max_steps = 20'000;
  return o;
}

struct ShootingConfig {
  std::size_t nodes = 8;
  double newton_tol = 1e-9;
  int max_iters = 100;
  double backtrack = 0.5;
  double min_step = std::ldexp(1.0, -20);
  double armijo = 1e-4;
  JacobianMode jacobian_mode = JacobianMode::Sensitivity;
  std::optional<InitialGuess> init;
  bool turnpike_init = true;
  double max_segment_length = 0.0;  // > 0 raises the node count on long horizons
  // Integration error has to sit well below newton_tol, so solves run tighter
  // than the plain integrate() defaults.
  IntegratorOptions integrator = solve_integrator_defaults();
  std::size_t output_intervals = 600;
  std::function<void(int iteration, double step, double residual)> progress;
  // Intermediate homotopy stages only need to stay on the path.
  double stage_tol = 1e-7;
  int stage_max_iters = 30;
  IntegratorOptions stage_integrator = stage_integrator_defaults();
};

struct ExtremalSolution {
  double T = 0.0;
  Vec times;
  std::vector<Vec> x, y, px, u, ydot;
  Vec lambda;
  Vec px0;
  Vec node_times;
  std::vector<Vec> node_states;  // (x, y, p_x) at node_times, last one integrated
  double residual_norm = 0.0;
  int iterations = 0;
  std::size_t nodes = 0;

  std::size_t size() const noexcept { return times.size(); }
  /// Full state (x, y, p_x) at sample i.
  Vec state(std::size_t i) const { return concat({x[i], y[i], px[i]}); }
};

namespace detail {

inline constexpr double kShootingFdStep = 1e-6;

// Unknown vector: node 0 holds (p_x(0), λ₀); node k ≥ 1 holds (z_k, λ_k)
// with z = (x, y, p_x). Every segment carries its own copy of λ, tied to the
// next one by an equality defect, which keeps the Jacobian banded.
struct Layout {
  std::size_t n, p, d, segments;
  std::size_t block() const { return d + p; }
  std::size_t unknowns() const { return n + p + (segments - 1) * block(); }
  std::size_t offset(std::size_t k) const { return k == 0 ? 0 : n + p + (k - 1) * block(); }
  std::size_t lambda_offset(std::size_t k) const { return offset(k) + (k == 0 ? n : d); }
  std::size_t row(std::size_t k) const { return k * block(); }
  std::size_t lower_band() const { return block() - 1 + n + p; }
  std::size_t upper_band() const { return 2 * block() - n - p - 1; }
};

// Jacobian of fbvp_rhs in z = (x, y, p_x). The x/p_x rows come from the
// reduced linearization; the y rows by central differences.
inline Matrix fbvp_state_jacobian(const CyclicProblem& pb, std::span<const double> z, std::span<const double> lambda) {
  const std::size_t n = pb.dims().n, p = pb.dims().p, d = 2 * n + p;
  if (!pb.has_reduced_jacobian()) {
    const Vec lam(lambda.begin(), lambda.end());
    return jacobian([&](std::span<const double> w) { return fbvp_rhs(pb, w, lam); }, z);
  }
  const Vec x(z.begin(), z.begin() + n);
  const Vec px(z.begin() + n + p, z.end());
  const Matrix r = linearize_reduced(pb, ReducedState{x, px}, lambda);
  auto full_index = [n, p](std::size_t i) { return i < n ? i : i + p; };
  Matrix j(d, d);
  for (std::size_t a = 0; a < 2 * n; ++a)
    for (std::size_t b = 0; b < 2 * n; ++b) j(full_index(a), full_index(b)) = r(a, b);
  const Vec lam(lambda.begin(), lambda.end());
  const Vec s = concat({x, px});
  const Matrix jy = jacobian(
      [&](std::span<const double> w) {
        const Vec u = optimal_feedback(pb, w.subspan(0, n), w.subspan(n, n), lam);
        return pb.cyclic_drift(w.subspan(0, n)) + pb.cyclic_control(w.subspan(0, n)) * u;
      },
      s);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < 2 * n; ++b) j(n + a, full_index(b)) = jy(a, b);
  return j;
}

struct SegmentFlow {
  Vec end;
  Matrix sens;  // d × (d + p)
};

inline Vec flow_segment(const CyclicProblem& pb, const Vec& start, const Vec& lambda, double t0, double t1,
                        const IntegratorOptions& opts) {
  const Vec grid{t0, t1};
  Trajectory tr = integrate([&](std::span<const double> z) { return fbvp_rhs(pb, z, lambda); }, start, grid, opts);
  return tr.back();
}

inline SegmentFlow flow_segment_sens(const CyclicProblem& pb, const Vec& start, const Vec& lambda, double t0,
                                     double t1, const ShootingConfig& cfg) {
  const std::size_t d = start.size(), p = lambda.size();
  SegmentFlow out;
  if (cfg.jacobian_mode == JacobianMode::Sensitivity) {
    const Vec grid{t0, t1};
    auto rhs = [&](std::span<const double> z, std::span<const double> l) { return fbvp_rhs(pb, z, l); };
    auto jz = [&](std::span<const double> z, std::span<const double> l) { return fbvp_state_jacobian(pb, z, l); };
    SensitivityResult r = integrate_with_sensitivity(rhs, jz, nullptr, start, lambda, grid, cfg.integrator);
    out.end = r.trajectory.back();
    out.sens = std::move(r.end_sensitivity);
    return out;
  }
  out.end = flow_segment(pb, start, lambda, t0, t1, cfg.integrator);
  out.sens = Matrix(d, d + p);
  for (std::size_t j = 0; j < d + p; ++j) {
    Vec zs = start, ls = lambda;
    double& v = j < d ? zs[j] : ls[j - d];
    const double base = v;
    const double h = fd_step(base, kShootingFdStep);
    v = base + h;
    const Vec fp = flow_segment(pb, zs, ls, t0, t1, cfg.integrator);
    v = base - h;
    const Vec fm = flow_segment(pb, zs, ls, t0, t1, cfg.integrator);
    for (std::size_t i = 0; i < d; ++i) out.sens(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return out;
}

inline Vec node_start(const CyclicProblem& pb, const Layout& L, std::span<const double> w, std::size_t k) {
  if (k == 0) return concat({pb.x0(), pb.y0(), w.subspan(0, L.n)});
  const auto off = L.offset(k);
  return Vec(w.begin() + off, w.begin() + off + L.d);
}

inline Vec node_lambda(const Layout& L, std::span<const double> w, std::size_t k) {
  const auto off = L.lambda_offset(k);
  return Vec(w.begin() + off, w.begin() + off + L.p);
}

// Defects of segment k given the flowed end state.
inline void segment_defects(const CyclicProblem& pb, const Layout& L, std::span<const double> w, std::size_t k,
                            const Vec& end, Vec& r) {
  const std::size_t row = L.row(k);
  if (k + 1 < L.segments) {
    const auto off = L.offset(k + 1);
    for (std::size_t i = 0; i < L.d; ++i) r[row + i] = end[i] - w[off + i];
    const auto lk = L.lambda_offset(k), ln = L.lambda_offset(k + 1);
    for (std::size_t i = 0; i < L.p; ++i) r[row + L.d + i] = w[lk + i] - w[ln + i];
  } else {
    for (std::size_t i = 0; i < L.n; ++i) r[row + i] = end[i] - pb.xT()[i];
    for (std::size_t i = 0; i < L.p; ++i) r[row + L.n + i] = end[L.n + i] - pb.yT()[i];
  }
}

inline Vec shooting_residual(const CyclicProblem& pb, const Layout& L, std::span<const double> w,
                             const Vec& node_times, const ShootingConfig& cfg) {
  Vec r(L.unknowns(), 0.0);
  for (std::size_t k = 0; k < L.segments; ++k) {
    const Vec end = flow_segment(pb, node_start(pb, L, w, k), node_lambda(L, w, k), node_times[k], node_times[k + 1],
                                 cfg.integrator);
    segment_defects(pb, L, w, k, end, r);
  }
  return r;
}

inline std::pair<Vec, BandMatrix> shooting_system(const CyclicProblem& pb, const Layout& L, std::span<const double> w,
                                                  const Vec& node_times, const ShootingConfig& cfg) {
  const std::size_t m = L.unknowns();
  Vec r(m, 0.0);
  BandMatrix jac(m, L.lower_band(), L.upper_band());
  for (std::size_t k = 0; k < L.segments; ++k) {
    const SegmentFlow f =
        flow_segment_sens(pb, node_start(pb, L, w, k), node_lambda(L, w, k), node_times[k], node_times[k + 1], cfg);
    segment_defects(pb, L, w, k, f.end, r);
    const std::size_t row = L.row(k);
    const bool last = k + 1 == L.segments;
    const std::size_t flowed_rows = last ? L.n + L.p : L.d;
    const auto lk = L.lambda_offset(k);
    for (std::size_t i = 0; i < flowed_rows; ++i) {
      if (k == 0) {
        for (std::size_t j = 0; j < L.n; ++j) jac(row + i, j) = f.sens(i, L.n + L.p + j);
      } else {
        const auto off = L.offset(k);
        for (std::size_t j = 0; j < L.d; ++j) jac(row + i, off + j) = f.sens(i, j);
      }
      for (std::size_t j = 0; j < L.p; ++j) jac(row + i, lk + j) = f.sens(i, L.d + j);
    }
    if (!last) {
      const auto off = L.offset(k + 1), ln = L.lambda_offset(k + 1);
      for (std::size_t i = 0; i < L.d; ++i) jac(row + i, off + i) = -1.0;
      for (std::size_t i = 0; i < L.p; ++i) {
        jac(row + L.d + i, lk + i) = 1.0;
        jac(row + L.d + i, ln + i) = -1.0;
      }
    }
  }
  return {std::move(r), std::move(jac)};
}

inline std::size_t effective_nodes(const ShootingConfig& cfg, double T) {
  if (cfg.nodes < 1) fail(ErrorKind::ConfigError, "shooting needs at least one segment");
  std::size_t n = cfg.nodes;
  if (cfg.max_segment_length > 0.0) n = std::max(n, static_cast<std::size_t>(std::ceil(T / cfg.max_segment_length - 1e-9)));
  return n;
}

// Turnpike-shaped seed: steady point at the current λ with exponential
// boundary layers, and the straight line in y.
inline StateProfile turnpike_profile(const CyclicProblem& pb, const Vec& lambda) {
  const std::size_t n = pb.dims().n;
  const double T = pb.horizon();
  const Vec x0 = pb.x0(), xT = pb.xT(), y0 = pb.y0(), yT = pb.yT();
  Vec xbar = 0.5 * (x0 + xT), pbar(n, 0.0);
  double mu = 1.0;
  try {
    const SteadyPoint sp = solve_static(pb, lambda);
    const HyperbolicityReport rep = check_hyperbolicity(pb, sp);
    if (rep.hyperbolic) {
      xbar = sp.xbar;
      pbar = sp.pxbar;
      mu = rep.mu_star;
    }
  } catch (const Error&) {
    // fall through to the boundary-data midpoint
  }
  return [=](double t) {
    const double el = std::exp(-mu * t), er = std::exp(-mu * (T - t));
    Vec x = xbar + el * (x0 - xbar) + er * (xT - xbar);
    Vec y = y0 + (t / T) * (yT - y0);
    return concat({x, y, pbar});
  };
}

}  // namespace detail

/// Linear interpolation of a solution's full state at time t.
inline Vec sample_state(const ExtremalSolution& sol, double t) {
  const Vec& ts = sol.times;
  if (t <= ts.front()) return sol.state(0);
  if (t >= ts.back()) return sol.state(ts.size() - 1);
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - ts.begin()) - 1;
  const double w = (t - ts[i]) / (ts[i + 1] - ts[i]);
  return (1.0 - w) * sol.state(i) + w * sol.state(i + 1);
}

/// Solves the boundary value problem by damped-Newton multiple shooting.
inline ExtremalSolution solve_bvp(const CyclicProblem& pb, const ShootingConfig& cfg = {}) {
  const std::size_t n = pb.dims().n, p = pb.dims().p;
  const double T = pb.horizon();
  if (!(cfg.newton_tol > 0.0)) fail(ErrorKind::ConfigError, "Newton tolerance must be positive");
  detail::Layout L{n, p, 2 * n + p, detail::effective_nodes(cfg, T)};
  const Vec node_times = uniform_grid(0.0, T, L.segments);

  // ---- initial unknown vector ----
  Vec w(L.unknowns(), 0.0);
  const InitialGuess guess = cfg.init.value_or(InitialGuess{});
  const Vec lambda0 = guess.lambda.empty() ? Vec(p, 0.0) : guess.lambda;
  if (lambda0.size() != p) fail(ErrorKind::ShapeMismatch, "initial multiplier size");
  for (std::size_t k = 0; k < L.segments; ++k) std::copy(lambda0.begin(), lambda0.end(), w.begin() + L.lambda_offset(k));

  StateProfile profile = guess.profile;
  if (!profile && guess.segment_states.empty() && cfg.turnpike_init && L.segments > 1) {
    profile = detail::turnpike_profile(pb, lambda0);
  }
  if (!guess.px0.empty()) {
    if (guess.px0.size() != n) fail(ErrorKind::ShapeMismatch, "initial adjoint size");
    std::copy(guess.px0.begin(), guess.px0.end(), w.begin());
  } else if (guess.profile) {
    const Vec z = guess.profile(0.0);
    std::copy(z.begin() + n + p, z.end(), w.begin());
  }
  for (std::size_t k = 1; k < L.segments; ++k) {
    Vec z;
    if (!guess.segment_states.empty()) {
      if (guess.segment_states.size() != L.segments - 1) fail(ErrorKind::ShapeMismatch, "interior node count");
      z = guess.segment_states[k - 1];
    } else if (profile) {
      z = profile(node_times[k]);
    } else {
      const double s = node_times[k] / T;
      z = concat({(1.0 - s) * pb.x0() + s * pb.xT(), (1.0 - s) * pb.y0() + s * pb.yT(), Vec(n, 0.0)});
    }
    if (z.size() != L.d) fail(ErrorKind::ShapeMismatch, "interior node state size");
    std::copy(z.begin(), z.end(), w.begin() + L.offset(k));
  }

  // ---- Newton ----
  NewtonOptions nopt;
  nopt.tol = cfg.newton_tol;
  nopt.max_iters = cfg.max_iters;
  nopt.backtrack = cfg.backtrack;
  nopt.min_step = cfg.min_step;
  nopt.armijo = cfg.armijo;
  nopt.singular_kind = ErrorKind::SingularShootingJacobian;
  nopt.progress = cfg.progress;
  ResidualMap residual = [&](std::span<const double> v) {
    return detail::shooting_residual(pb, L, v, node_times, cfg);
  };
  NewtonSystem system = [&](std::span<const double> v) {
    auto [r, jac] = detail::shooting_system(pb, L, v, node_times, cfg);
    auto lu = std::make_shared<BandLu>(std::move(jac));
    return std::pair<Vec, LinearSolve>{std::move(r), [lu](std::span<const double> b) { return lu->solve(b); }};
  };
  NewtonResult nr = damped_newton(system, residual, std::move(w), nopt);

  // ---- dense sampling on the output grid ----
  ExtremalSolution sol;
  sol.T = T;
  sol.nodes = L.segments;
  sol.lambda = detail::node_lambda(L, nr.z, 0);
  sol.px0.assign(nr.z.begin(), nr.z.begin() + n);
  sol.node_times = node_times;
  sol.residual_norm = nr.residual_norm;
  sol.iterations = nr.iterations;

  const std::size_t intervals = std::max<std::size_t>(cfg.output_intervals, 2);
  const Vec out_grid = uniform_grid(0.0, T, intervals);
  const double eps = 1e-12 * T;
  std::vector<Vec> samples(out_grid.size());
  std::size_t next = 0;
  for (std::size_t k = 0; k < L.segments; ++k) {
    const double a = node_times[k], b = node_times[k + 1];
    const Vec start = detail::node_start(pb, L, nr.z, k);
    sol.node_states.push_back(start);
    Vec local{a};
    std::vector<std::size_t> idx;
    while (next < out_grid.size() && out_grid[next] < b - eps) {
      if (out_grid[next] > a + eps) {
        local.push_back(out_grid[next]);
        idx.push_back(next);
      } else {
        samples[next] = start;  // coincides with the node
      }
      ++next;
    }
    local.push_back(b);
    Trajectory tr = integrate([&](std::span<const double> z) { return fbvp_rhs(pb, z, sol.lambda); }, start, local,
                              cfg.integrator);
    for (std::size_t j = 0; j < idx.size(); ++j) samples[idx[j]] = tr.states[j + 1];
    if (k + 1 == L.segments) {
      sol.node_states.push_back(tr.back());
      for (; next < out_grid.size(); ++next) samples[next] = tr.back();
    }
  }
  sol.times = out_grid;
  for (const Vec& z : samples) {
    std::span<const double> zs(z);
    Vec xs(zs.begin(), zs.begin() + n), ys(zs.begin() + n, zs.begin() + n + p), ps(zs.begin() + n + p, zs.end());
    Vec u = optimal_feedback(pb, xs, ps, sol.lambda);
    sol.ydot.push_back(pb.cyclic_drift(xs) + pb.cyclic_control(xs) * u);
    sol.x.push_back(std::move(xs));
    sol.y.push_back(std::move(ys));
    sol.px.push_back(std::move(ps));
    sol.u.push_back(std::move(u));
  }
  return sol;
}

/// Warm start for a longer horizon: the boundary layers of the previous
/// solution are kept and its middle is stretched; y in the inserted stretch
/// moves at the rate that absorbs the change of the terminal value.
inline InitialGuess stretch_warm_start(const ExtremalSolution& prev, const CyclicProblem& next) {
  const std::size_t n = next.dims().n, p = next.dims().p;
  const double t_old = prev.T, t_new = next.horizon();
  const double half = 0.5 * t_old;
  const double extra = t_new - t_old;
  const Vec dy = next.yT() - prev.y.back();
  const Vec y_half = sample_state(prev, half);
  InitialGuess g;
  g.lambda = prev.lambda;
  g.px0 = prev.px0;
  g.profile = [=](double t) {
    if (t <= half) return sample_state(prev, t);
    if (t >= half + extra) {
      Vec z = sample_state(prev, std::max(t_old - (t_new - t), half));
      for (std::size_t i = 0; i < p; ++i) z[n + i] += dy[i];
      return z;
    }
    Vec z = y_half;
    const double frac = extra > 0.0 ? (t - half) / extra : 0.0;
    for (std::size_t i = 0; i < p; ++i) z[n + i] += frac * dy[i];
    return z;
  };
  return g;
}

/// Family of problems indexed by the horizon.
using HorizonFamily = std::function<CyclicProblem(double)>;

/// Solves at T_start (or continues from `seed`) and walks the horizon up to
/// T_end, returning the solutions at `steps` equal increments. A failed
/// increment is split in halves (at most ten times) through intermediate
/// horizons solved at the stage tolerance.
inline std::vector<ExtremalSolution> continuation_in_T(const HorizonFamily& family, double T_start, double T_end,
                                                       int steps, const ShootingConfig& cfg = {},
                                                       const ExtremalSolution* seed = nullptr) {
  if (!(T_start <= T_end)) fail(ErrorKind::ConfigError, "continuation requires T_start <= T_end");
  if (steps < 1) steps = 1;
  ShootingConfig stage = cfg;
  stage.newton_tol = std::max(cfg.newton_tol, cfg.stage_tol);
  stage.integrator = cfg.stage_integrator;
  stage.max_iters = std::min(cfg.max_iters, cfg.stage_max_iters);
  auto solve_from = [&](const ExtremalSolution* prev, double T, const ShootingConfig& base) {
    const CyclicProblem pb = family(T);
    ShootingConfig c = base;
    if (prev) c.init = stretch_warm_start(*prev, pb);
    return solve_bvp(pb, c);
  };

  std::vector<ExtremalSolution> out;
  const int count = T_start == T_end ? 1 : steps + 1;
  for (int i = 0; i < count; ++i) {
    const double T = count == 1 ? T_start : T_start + (T_end - T_start) * i / steps;
    try {
      const ExtremalSolution* prev = out.empty() ? seed : &out.back();
      if (!prev || prev->T == T) {
        out.push_back(prev ? *prev : solve_from(nullptr, T, cfg));
        continue;
      }
      ExtremalSolution cur = *prev;
      double h = T - cur.T;
      const double h_min = h / 1024.0;
      while (true) {
        const bool last = cur.T + h >= T - 1e-12 * std::max(1.0, T);
        const double target = last ? T : cur.T + h;
        try {
          ExtremalSolution next = solve_from(&cur, target, last ? cfg : stage);
          if (last) {
            out.push_back(std::move(next));
            break;
          }
          cur = std::move(next);
          h = std::min(1.5 * h, T - cur.T);
        } catch (const Error& e) {
          h *= 0.5;
          if (h < h_min) throw;
        }
      }
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "at T=" << T << ": " << e.what();
      fail(e.kind(), msg.str());
    }
  }
  return out;
}

/// Fixed boundary data, varying horizon.
inline std::vector<ExtremalSolution> continuation_in_T(const CyclicProblem& pb, double T_start, double T_end,
                                                       int steps, const ShootingConfig& cfg = {}) {
  return continuation_in_T([&pb](double T) { return pb.with_horizon(T); }, T_start, T_end, steps, cfg);
}

struct BoundaryData {
  Vec x0, xT, y0, yT;
};

/// Trim-consistent boundary data at a steady point: x0 = x_T = x̄ and
/// y_T − y0 = T·(trim velocity). The trim itself is an exact extremal there,
/// and the returned guess reproduces it.
inline std::pair<BoundaryData, InitialGuess> trim_start(const CyclicProblem& pb, const SteadyPoint& sp) {
  BoundaryData b{sp.xbar, sp.xbar, pb.y0(), pb.y0() + pb.horizon() * sp.trim_velocity};
  InitialGuess g;
  g.lambda = sp.lambda;
  g.px0 = sp.pxbar;
  const Vec xbar = sp.xbar, pbar = sp.pxbar, y0 = pb.y0(), v = sp.trim_velocity;
  g.profile = [=](double t) { return concat({xbar, y0 + t * v, pbar}); };
  return {b, g};
}

/// Moves boundary data linearly from `start` to the problem's own data,
/// solving at each stage from a secant prediction through the last two
/// solutions. The stage length is halved on failure, down to 1/1024 of the
/// path, and regrows after successes.
inline ExtremalSolution boundary_homotopy(const CyclicProblem& target, const BoundaryData& start, int steps,
                                          const ShootingConfig& cfg = {},
                                          std::vector<ExtremalSolution>* path = nullptr) {
  if (steps < 1) steps = 1;
  auto at = [&](double s) {
    auto mix = [s](const Vec& a, const Vec& b) { return (1.0 - s) * a + s * b; };
    return target.with_boundary(mix(start.x0, target.x0()), mix(start.xT, target.xT()), mix(start.y0, target.y0()),
                                mix(start.yT, target.yT()));
  };
  ShootingConfig stage = cfg;
  stage.newton_tol = std::max(cfg.newton_tol, cfg.stage_tol);
  stage.integrator = cfg.stage_integrator;
  stage.max_iters = std::min(cfg.max_iters, cfg.stage_max_iters);
  ExtremalSolution current = solve_bvp(at(0.0), stage);
  if (path) path->push_back(current);
  std::optional<ExtremalSolution> previous;
  double s = 0.0, s_prev = 0.0;
  double ds = 1.0 / steps;
  const double min_ds = 1.0 / 1024.0;
  while (s < 1.0) {
    const double s_next = std::min(1.0, s + ds);
    const CyclicProblem pb = at(s_next);
    const bool final_stage = s_next >= 1.0;
    const bool same_grid = current.nodes == detail::effective_nodes(cfg, pb.horizon());
    InitialGuess g;
    if (previous && same_grid && previous->nodes == current.nodes) {
      const double r = (s_next - s) / (s - s_prev);
      auto extrap = [r](const Vec& c, const Vec& o) { return c + r * (c - o); };
      g.lambda = extrap(current.lambda, previous->lambda);
      g.px0 = extrap(current.px0, previous->px0);
      for (std::size_t k = 1; k + 1 < current.node_states.size(); ++k)
        g.segment_states.push_back(extrap(current.node_states[k], previous->node_states[k]));
    } else {
      g.lambda = current.lambda;
      g.px0 = current.px0;
      if (same_grid) {
        g.segment_states.assign(current.node_states.begin() + 1, current.node_states.end() - 1);
      } else {
        const ExtremalSolution copy = current;
        g.profile = [copy](double t) { return sample_state(copy, t); };
      }
    }
    ShootingConfig c = final_stage ? cfg : stage;
    c.init = std::move(g);
    try {
      ExtremalSolution next = solve_bvp(pb, c);
      previous = std::move(current);
      current = std::move(next);
      s_prev = s;
      s = s_next;
      if (path) path->push_back(current);
      ds = std::min(1.5 * ds, 1.0 / steps);
    } catch (const Error& e) {
      ds *= 0.5;
      if (ds < min_ds) {
        std::ostringstream msg;
        msg << "boundary homotopy stalled at s=" << s << ": " << e.what();
        fail(e.kind(), msg.str());
      }
    }
  }
  return current;
}

}  // namespace trimturn
