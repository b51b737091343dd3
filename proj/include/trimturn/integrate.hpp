#pragma once

// Explicit integrators for autonomous flows: adaptive Dormand–Prince 5(4)
// with its 4th-order dense output, and classical fixed-step RK4 with cubic
// Hermite output. Forward sensitivities are propagated by integrating the
// variational equations alongside the state.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trimturn/error.hpp"
#include "trimturn/linalg.hpp"
#include "trimturn/model.hpp"

namespace trimturn {

using OdeRhs = std::function<Vec(std::span<const double>)>;
using ParamRhs = std::function<Vec(std::span<const double> z, std::span<const double> params)>;
using ParamJacobian = std::function<Matrix(std::span<const double> z, std::span<const double> params)>;

enum class IntegratorMethod { DormandPrince, Rk4 };

struct IntegratorOptions {
  IntegratorMethod method = IntegratorMethod::DormandPrince;
  int steps = 1000;  // RK4 only
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  double blowup_norm = 1e12;
  long max_steps = 200'000;
};

struct Trajectory {
  Vec times;
  std::vector<Vec> states;

  std::size_t size() const noexcept { return times.size(); }
  std::size_t dim() const noexcept { return states.empty() ? 0 : states.front().size(); }
  const Vec& back() const { return states.back(); }
};

inline Vec uniform_grid(double a, double b, std::size_t intervals) {
  Vec g(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i) g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(intervals);
  g.front() = a;
  g.back() = b;
  return g;
}

namespace detail {

struct DopriTableau {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

inline void check_grid(double a, double b, std::span<const double> grid) {
  if (!(a < b)) fail(ErrorKind::StepFailure, "integration interval must satisfy a < b");
  if (grid.size() < 2 || grid.front() != a || grid.back() != b) {
    fail(ErrorKind::GridTooCoarse, "output grid must start at a and end at b");
  }
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) fail(ErrorKind::GridTooCoarse, "output grid must be strictly increasing");
}

inline void check_state(std::span<const double> z, std::size_t monitored, double limit, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < monitored; ++i) {
    if (!std::isfinite(z[i])) fail(ErrorKind::BlowUp, "non-finite state at t=" + std::to_string(t));
    s += z[i] * z[i];
  }
  if (std::sqrt(s) > limit) fail(ErrorKind::BlowUp, "state norm exceeded limit at t=" + std::to_string(t));
}

/// Core driver shared by the plain and the sensitivity integrations. Only the
/// first `monitored` components enter the error norm and the blow-up check, so
/// a state integrated with its sensitivities follows exactly the step
/// sequence of the plain integration.
inline Trajectory integrate_on_grid(const OdeRhs& rhs, Vec z0, std::span<const double> grid,
                                    const IntegratorOptions& opts, std::size_t monitored) {
  const double a = grid.front();
  const double b = grid.back();
  const std::size_t d = z0.size();
  Trajectory out;
  out.times.assign(grid.begin(), grid.end());
  out.states.reserve(grid.size());
  out.states.push_back(z0);
  check_state(z0, monitored, opts.blowup_norm, a);
  std::size_t next = 1;

  auto eval = [&](std::span<const double> z) {
    Vec f = rhs(z);
    if (f.size() != d) fail(ErrorKind::ShapeMismatch, "right-hand side returned wrong length");
    return f;
  };

  if (opts.method == IntegratorMethod::Rk4) {
    const int steps = std::max(1, opts.steps);
    const double h = (b - a) / steps;
    Vec z = z0;
    Vec f0 = eval(z);
    Vec tmp(d);
    for (int s = 0; s < steps; ++s) {
      const double t0 = a + h * s;
      const double t1 = (s + 1 == steps) ? b : a + h * (s + 1);
      const double hs = t1 - t0;
      const Vec& k1 = f0;
      for (std::size_t i = 0; i < d; ++i) tmp[i] = z[i] + 0.5 * hs * k1[i];
      Vec k2 = eval(tmp);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = z[i] + 0.5 * hs * k2[i];
      Vec k3 = eval(tmp);
      for (std::size_t i = 0; i < d; ++i) tmp[i] = z[i] + hs * k3[i];
      Vec k4 = eval(tmp);
      Vec z1(d);
      for (std::size_t i = 0; i < d; ++i) z1[i] = z[i] + hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      check_state(z1, monitored, opts.blowup_norm, t1);
      Vec f1 = eval(z1);
      while (next < grid.size() && grid[next] <= t1 + 1e-14 * std::abs(b - a)) {
        const double tt = grid[next];
        if (next + 1 == grid.size() || std::abs(tt - t1) <= 1e-14 * std::abs(b - a)) {
          out.states.push_back(z1);
        } else {
          // cubic Hermite between step nodes
          const double th = (tt - t0) / hs;
          const double h00 = (1 + 2 * th) * (1 - th) * (1 - th), h10 = th * (1 - th) * (1 - th);
          const double h01 = th * th * (3 - 2 * th), h11 = th * th * (th - 1);
          Vec zi(d);
          for (std::size_t i = 0; i < d; ++i)
            zi[i] = h00 * z[i] + h10 * hs * f0[i] + h01 * z1[i] + h11 * hs * f1[i];
          out.states.push_back(std::move(zi));
        }
        ++next;
      }
      z = std::move(z1);
      f0 = std::move(f1);
    }
    return out;
  }

  using T = DopriTableau;
  const double span = b - a;
  const double h_min = 1e-12 * span;
  auto scale = [&](double y0, double y1) {
    return opts.abs_tol + opts.rel_tol * std::max(std::abs(y0), std::abs(y1));
  };

  Vec z = std::move(z0);
  Vec k1 = eval(z);

  // initial step (Hairer's heuristic)
  double h = 0.0;
  {
    double dn0 = 0.0, dn1 = 0.0;
    for (std::size_t i = 0; i < monitored; ++i) {
      const double sc = scale(z[i], z[i]);
      dn0 += (z[i] / sc) * (z[i] / sc);
      dn1 += (k1[i] / sc) * (k1[i] / sc);
    }
    dn0 = std::sqrt(dn0 / monitored);
    dn1 = std::sqrt(dn1 / monitored);
    double h0 = (dn0 < 1e-5 || dn1 < 1e-5) ? 1e-6 : 0.01 * dn0 / dn1;
    h0 = std::min(h0, span);
    Vec z1(d);
    for (std::size_t i = 0; i < d; ++i) z1[i] = z[i] + h0 * k1[i];
    Vec f1 = eval(z1);
    double dn2 = 0.0;
    for (std::size_t i = 0; i < monitored; ++i) {
      const double sc = scale(z[i], z[i]);
      dn2 += ((f1[i] - k1[i]) / sc) * ((f1[i] - k1[i]) / sc);
    }
    dn2 = std::sqrt(dn2 / monitored) / h0;
    const double dm = std::max(dn1, dn2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, span});
  }

  double t = a;
  bool last_rejected = false;
  long n_steps = 0;
  Vec k2, k3, k4, k5, k6, k7, ys(d), ynew(d);
  while (t < b) {
    if (++n_steps > opts.max_steps) fail(ErrorKind::StepFailure, "maximum number of steps exceeded");
    bool final_step = false;
    if (t + h >= b) {
      h = b - t;
      final_step = true;
    }
    if (h < h_min && !final_step) fail(ErrorKind::StepFailure, "step size underflow at t=" + std::to_string(t));

    for (std::size_t i = 0; i < d; ++i) ys[i] = z[i] + h * T::a21 * k1[i];
    k2 = eval(ys);
    for (std::size_t i = 0; i < d; ++i) ys[i] = z[i] + h * (T::a31 * k1[i] + T::a32 * k2[i]);
    k3 = eval(ys);
    for (std::size_t i = 0; i < d; ++i) ys[i] = z[i] + h * (T::a41 * k1[i] + T::a42 * k2[i] + T::a43 * k3[i]);
    k4 = eval(ys);
    for (std::size_t i = 0; i < d; ++i)
      ys[i] = z[i] + h * (T::a51 * k1[i] + T::a52 * k2[i] + T::a53 * k3[i] + T::a54 * k4[i]);
    k5 = eval(ys);
    for (std::size_t i = 0; i < d; ++i)
      ys[i] = z[i] + h * (T::a61 * k1[i] + T::a62 * k2[i] + T::a63 * k3[i] + T::a64 * k4[i] + T::a65 * k5[i]);
    k6 = eval(ys);
    for (std::size_t i = 0; i < d; ++i)
      ynew[i] = z[i] + h * (T::a71 * k1[i] + T::a73 * k3[i] + T::a74 * k4[i] + T::a75 * k5[i] + T::a76 * k6[i]);
    k7 = eval(ynew);

    double err = 0.0;
    for (std::size_t i = 0; i < monitored; ++i) {
      const double e =
          h * (T::e1 * k1[i] + T::e3 * k3[i] + T::e4 * k4[i] + T::e5 * k5[i] + T::e6 * k6[i] + T::e7 * k7[i]);
      const double sc = scale(z[i], ynew[i]);
      err += (e / sc) * (e / sc);
    }
    err = std::sqrt(err / monitored);
    if (!std::isfinite(err)) err = 1e10;

    if (err <= 1.0) {
      const double t_new = final_step ? b : t + h;
      check_state(ynew, monitored, opts.blowup_norm, t_new);
      // dense output on [t, t_new]
      if (next < grid.size() && grid[next] <= t_new) {
        Vec r1 = z, r2(d), r3(d), r4(d), r5(d);
        for (std::size_t i = 0; i < d; ++i) {
          const double ydiff = ynew[i] - z[i];
          const double bspl = h * k1[i] - ydiff;
          r2[i] = ydiff;
          r3[i] = bspl;
          r4[i] = ydiff - h * k7[i] - bspl;
          r5[i] = h * (T::d1 * k1[i] + T::d3 * k3[i] + T::d4 * k4[i] + T::d5 * k5[i] + T::d6 * k6[i] + T::d7 * k7[i]);
        }
        while (next < grid.size() && grid[next] <= t_new) {
          if (next + 1 == grid.size() || grid[next] == t_new) {
            out.states.push_back(ynew);
          } else {
            const double th = (grid[next] - t) / h;
            const double th1 = 1.0 - th;
            Vec zi(d);
            for (std::size_t i = 0; i < d; ++i)
              zi[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
            out.states.push_back(std::move(zi));
          }
          ++next;
        }
      }
      t = t_new;
      std::swap(z, ynew);
      std::swap(k1, k7);
      const double fac = std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, last_rejected ? 1.0 : 5.0);
      h *= fac;
      last_rejected = false;
      if (final_step) break;
    } else {
      h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
      last_rejected = true;
      if (h < h_min) fail(ErrorKind::StepFailure, "step size underflow at t=" + std::to_string(t));
    }
  }
  if (out.states.size() != grid.size()) fail(ErrorKind::StepFailure, "dense output incomplete");
  return out;
}

}  // namespace detail

/// Integrates ż = rhs(z) from z0 over the given output grid (first and last
/// entries are the interval endpoints).
inline Trajectory integrate(const OdeRhs& rhs, const Vec& z0, std::span<const double> grid,
                            const IntegratorOptions& opts = {}) {
  detail::check_grid(grid.front(), grid.back(), grid);
  return detail::integrate_on_grid(rhs, z0, grid, opts, z0.size());
}

/// Uniform output grid with `intervals` subintervals on [a, b].
inline Trajectory integrate(const OdeRhs& rhs, const Vec& z0, double a, double b, const IntegratorOptions& opts = {},
                            std::size_t intervals = 600) {
  if (!(a < b)) fail(ErrorKind::StepFailure, "integration interval must satisfy a < b");
  const Vec grid = uniform_grid(a, b, intervals);
  return integrate(rhs, z0, grid, opts);
}

struct SensitivityResult {
  Trajectory trajectory;
  Matrix end_sensitivity;  // d × (d + q): [∂z(b)/∂z0 | ∂z(b)/∂params]
};

/// Integrates the state together with its variational equations. Missing
/// Jacobian callbacks are replaced by central finite differences of rhs.
inline SensitivityResult integrate_with_sensitivity(const ParamRhs& rhs, const ParamJacobian& jac_state,
                                                    const ParamJacobian& jac_params, const Vec& z0,
                                                    const Vec& params, std::span<const double> grid,
                                                    const IntegratorOptions& opts = {}) {
  detail::check_grid(grid.front(), grid.back(), grid);
  const std::size_t d = z0.size();
  const std::size_t q = params.size();
  const std::size_t cols = d + q;

  auto state_jac = [&](std::span<const double> z) {
    if (jac_state) return jac_state(z, params);
    return jacobian([&](std::span<const double> zz) { return rhs(zz, params); }, z);
  };
  auto param_jac = [&](std::span<const double> z) {
    if (q == 0) return Matrix(d, 0);
    if (jac_params) return jac_params(z, params);
    return jacobian([&](std::span<const double> pp) { return rhs(z, pp); }, params);
  };

  OdeRhs augmented = [&](std::span<const double> w) {
    std::span<const double> z = w.subspan(0, d);
    Vec out(d + d * cols, 0.0);
    const Vec f = rhs(z, params);
    if (f.size() != d) fail(ErrorKind::ShapeMismatch, "right-hand side returned wrong length");
    std::copy(f.begin(), f.end(), out.begin());
    const Matrix a_mat = state_jac(z);
    const Matrix b_mat = param_jac(z);
    // S is stored row-major d × cols after the state.
    const double* s = w.data() + d;
    double* ds = out.data() + d;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const double aik = a_mat(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < cols; ++j) ds[i * cols + j] += aik * s[k * cols + j];
      }
      for (std::size_t j = 0; j < q; ++j) ds[i * cols + d + j] += b_mat(i, j);
    }
    return out;
  };

  Vec w0(d + d * cols, 0.0);
  std::copy(z0.begin(), z0.end(), w0.begin());
  for (std::size_t i = 0; i < d; ++i) w0[d + i * cols + i] = 1.0;

  Trajectory full = detail::integrate_on_grid(augmented, std::move(w0), grid, opts, d);
  SensitivityResult result;
  result.trajectory.times = full.times;
  result.trajectory.states.reserve(full.size());
  for (const auto& w : full.states) result.trajectory.states.emplace_back(w.begin(), w.begin() + d);
  result.end_sensitivity = Matrix(d, cols);
  const Vec& wend = full.states.back();
  std::copy(wend.begin() + d, wend.end(), result.end_sensitivity.data().begin());
  return result;
}

}  // namespace trimturn
