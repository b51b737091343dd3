#pragma once

// Built-in instances: a scalar linear-quadratic problem with a closed form,
// the Martinet-type nonlinear example in its flat and non-flat variants, and
// the planar controlled Kepler problem in polar coordinates.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>

#include "trimturn/error.hpp"
#include "trimturn/linalg.hpp"
#include "trimturn/model.hpp"

namespace trimturn {

// ---------------------------------------------------------------- LQ ----

struct LqParams {
  double x0 = 1.0;
  double xT = 2.0;
  double y0 = 0.0;
  double yT = 3.0;
  double T = 20.0;
};

/// min ∫ x² + u², ẋ = u, ẏ = x. Encoded with f0 = x², R = 2 so that
/// u* = −p_x/2 and ẍ − x = λ/2.
inline CyclicProblem lq_problem(const LqParams& prm = {}) {
  ProblemData d;
  d.name = "lq";
  d.dims = {1, 1, 1};
  d.running_cost = [](std::span<const double> x) { return x[0] * x[0]; };
  d.shape_drift = [](std::span<const double>) { return Vec{0.0}; };
  d.shape_control = [](std::span<const double>) { return Matrix{{1.0}}; };
  d.cyclic_drift = [](std::span<const double> x) { return Vec{x[0]}; };
  d.cyclic_control = [](std::span<const double>) { return Matrix{{0.0}}; };
  d.control_weight = Matrix{{2.0}};
  d.running_cost_gradient = [](std::span<const double> x) { return Vec{2.0 * x[0]}; };
  d.shape_drift_jacobian = [](std::span<const double>) { return Matrix{{0.0}}; };
  d.cyclic_drift_jacobian = [](std::span<const double>) { return Matrix{{1.0}}; };
  d.shape_control_gradient = [](std::span<const double>, std::span<const double>, std::span<const double>) {
    return Vec{0.0};
  };
  d.cyclic_control_gradient = d.shape_control_gradient;
  d.reduced_jacobian = [](std::span<const double>, std::span<const double>, std::span<const double>) {
    return Matrix{{0.0, -0.5}, {-2.0, 0.0}};
  };
  d.x0 = {prm.x0};
  d.xT = {prm.xT};
  d.y0 = {prm.y0};
  d.yT = {prm.yT};
  d.horizon = prm.T;
  return CyclicProblem(std::move(d));
}

/// Exact extremal of the LQ problem: x(t) = a eᵗ + b e⁻ᵗ − λ/2.
/// The growing mode is stored as a_scaled = a·e^T to stay representable for
/// long horizons.
struct LqClosedForm {
  double a_scaled = 0.0;
  double b = 0.0;
  double lambda = 0.0;
  double T = 0.0;
  double y0 = 0.0;

  double a() const { return a_scaled * std::exp(-T); }
  double grow(double t) const { return a_scaled * std::exp(t - T); }  // a eᵗ
  double x(double t) const { return grow(t) + b * std::exp(-t) - 0.5 * lambda; }
  double u(double t) const { return grow(t) - b * std::exp(-t); }
  double px(double t) const { return -2.0 * u(t); }
  double y(double t) const { return y0 + (grow(t) - a()) - b * (std::exp(-t) - 1.0) - 0.5 * lambda * t; }
  double xbar() const { return -0.5 * lambda; }
};

/// Solves the 3×3 boundary system exactly, without the large-T approximation.
inline LqClosedForm lq_exact(double x0, double xT, double y0, double yT, double T) {
  const double e = std::exp(-T);
  // unknowns (a·e^T, b, λ)
  const Matrix m{{e, 1.0, -0.5}, {1.0, e, -0.5}, {1.0 - e, 1.0 - e, -0.5 * T}};
  const Vec rhs{x0, xT, yT - y0};
  const Vec s = lu_solve(m, rhs);
  return {s[0], s[1], s[2], T, y0};
}

inline LqClosedForm lq_exact(const LqParams& prm = {}) { return lq_exact(prm.x0, prm.xT, prm.y0, prm.yT, prm.T); }

/// The large-horizon approximation λ ≈ 2(x0 + xT + y0 − yT)/(T − 2); with the
/// default data x0 + xT = 3, y0 = 0 this is 2(3 − y_T)/(T − 2).
inline double lq_lambda_approx(double x0, double xT, double y0, double yT, double T) {
  return 2.0 * (x0 + xT + y0 - yT) / (T - 2.0);
}

// --------------------------------------------------------------- NLQ ----

inline constexpr double kPoleThreshold = 1e-6;

struct NlqParams {
  double alpha = 0.0;
  std::optional<Vec> x0, xT, y0, yT;
  double T = 50.0;
};

namespace detail {

inline CyclicProblem nlq_flat(const NlqParams& prm) {
  ProblemData d;
  d.name = "nlq_flat";
  d.dims = {1, 2, 2};
  d.running_cost = [](std::span<const double> x) { return 0.5 * x[0] * x[0]; };
  d.shape_drift = [](std::span<const double>) { return Vec{0.0}; };
  d.shape_control = [](std::span<const double>) { return Matrix{{0.0, 1.0}}; };
  d.cyclic_drift = [](std::span<const double>) { return Vec{0.0, 0.0}; };
  d.cyclic_control = [](std::span<const double> x) { return Matrix{{1.0, 0.0}, {x[0] * x[0], 0.0}}; };
  d.control_weight = Matrix::identity(2);
  d.running_cost_gradient = [](std::span<const double> x) { return Vec{x[0]}; };
  d.shape_drift_jacobian = [](std::span<const double>) { return Matrix{{0.0}}; };
  d.cyclic_drift_jacobian = [](std::span<const double>) { return Matrix{{0.0}, {0.0}}; };
  d.shape_control_gradient = [](std::span<const double>, std::span<const double>, std::span<const double>) {
    return Vec{0.0};
  };
  d.cyclic_control_gradient = [](std::span<const double> x, std::span<const double> w, std::span<const double> u) {
    return Vec{2.0 * x[0] * w[1] * u[0]};
  };
  d.reduced_jacobian = [](std::span<const double> x, std::span<const double>, std::span<const double> l) {
    return Matrix{{0.0, -1.0}, {-1.0 + 2.0 * l[0] * l[1] + 6.0 * l[1] * l[1] * x[0] * x[0], 0.0}};
  };
  d.x0 = prm.x0.value_or(Vec{-2.0});
  d.xT = prm.xT.value_or(Vec{4.0});
  d.y0 = prm.y0.value_or(Vec{1.0, -1.0});
  d.yT = prm.yT.value_or(Vec{-5.0, 5.0});
  d.horizon = prm.T;
  return CyclicProblem(std::move(d));
}

inline CyclicProblem nlq_nonflat(const NlqParams& prm) {
  const double alpha = prm.alpha;
  auto weight = [alpha](double x1) {
    const double den = 1.0 + alpha * x1;
    if (std::abs(den) < kPoleThreshold) fail(ErrorKind::PoleProximity, "1 + alpha*x1 is too close to zero");
    return 1.0 / den;
  };
  ProblemData d;
  d.name = "nlq_nonflat";
  d.dims = {2, 1, 2};
  d.running_cost = [](std::span<const double> x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); };
  d.shape_drift = [](std::span<const double>) { return Vec{0.0, 0.0}; };
  d.shape_control = [weight](std::span<const double> x) { return Matrix{{0.0, 1.0}, {weight(x[0]), 0.0}}; };
  d.cyclic_drift = [](std::span<const double>) { return Vec{0.0}; };
  d.cyclic_control = [](std::span<const double> x) { return Matrix{{x[1] * x[1], 0.0}}; };
  d.control_weight = Matrix::identity(2);
  d.running_cost_gradient = [](std::span<const double> x) { return Vec{x[0], x[1]}; };
  d.shape_drift_jacobian = [](std::span<const double>) { return Matrix(2, 2); };
  d.cyclic_drift_jacobian = [](std::span<const double>) { return Matrix(1, 2); };
  d.shape_control_gradient = [weight, alpha](std::span<const double> x, std::span<const double> w,
                                             std::span<const double> u) {
    const double wt = weight(x[0]);
    return Vec{-alpha * wt * wt * w[1] * u[0], 0.0};
  };
  d.cyclic_control_gradient = [](std::span<const double> x, std::span<const double> w, std::span<const double> u) {
    return Vec{0.0, 2.0 * w[0] * x[1] * u[0]};
  };
  d.reduced_jacobian = [weight, alpha](std::span<const double> x, std::span<const double> p,
                                       std::span<const double> l) {
    const double w = weight(x[0]);
    const double lam = l[0], x2 = x[1], p2 = p[1];
    const double q = p2 * w + lam * x2 * x2;
    const double w2 = w * w, w3 = w2 * w;
    Matrix j(4, 4);
    // rows: ẋ1, ẋ2, ṗ1, ṗ2; columns: x1, x2, p1, p2
    j(0, 2) = -1.0;
    j(1, 0) = alpha * w2 * q + alpha * p2 * w3;
    j(1, 1) = -2.0 * lam * x2 * w;
    j(1, 3) = -w2;
    j(2, 0) = -1.0 + 2.0 * alpha * alpha * p2 * w3 * q + alpha * alpha * p2 * p2 * w3 * w;
    j(2, 1) = -2.0 * alpha * lam * p2 * w2 * x2;
    j(2, 3) = -alpha * w2 * q - alpha * p2 * w3;
    j(3, 0) = -2.0 * alpha * lam * x2 * p2 * w2;
    j(3, 1) = -1.0 + 2.0 * lam * q + 4.0 * lam * lam * x2 * x2;
    j(3, 3) = 2.0 * lam * x2 * w;
    return j;
  };
  d.x0 = prm.x0.value_or(Vec{-2.0, 1.0});
  d.xT = prm.xT.value_or(Vec{4.0, -5.0});
  d.y0 = prm.y0.value_or(Vec{-1.0});
  d.yT = prm.yT.value_or(Vec{5.0});
  d.horizon = prm.T;
  return CyclicProblem(std::move(d));
}

}  // namespace detail

/// α = 0 selects the flat variant (x = x₁, y = (x₂, x₃)); any other α the
/// non-flat one (x = (x₁, x₂), y = x₃).
inline CyclicProblem nlq_problem(const NlqParams& prm = {}) {
  return prm.alpha == 0.0 ? detail::nlq_flat(prm) : detail::nlq_nonflat(prm);
}

// ------------------------------------------------------------ Kepler ----

inline constexpr double kRadiusFloor = 1e-6;

/// Radius at which the circular orbit has angular rate π: s^{-3/2} = π.
inline double kepler_default_radius() { return std::pow(std::numbers::pi, -2.0 / 3.0); }

struct KeplerParams {
  double s_tilde = kepler_default_radius();
  double T = 100.0;
  std::optional<double> theta_T;  // defaults to πT
  std::optional<Vec> x0, xT;
  double theta0 = 0.0;
};

inline Vec kepler_circular_state(double s) { return {s, 0.0, std::pow(s, -1.5)}; }

/// State (s, v_s, v_θ), cyclic θ, control (radial, tangential) thrust;
/// unit mass and gravitational parameter.
inline CyclicProblem kepler_problem(const KeplerParams& prm = {}) {
  if (!(prm.s_tilde > kRadiusFloor)) fail(ErrorKind::ConfigError, "reference radius must be positive");
  const Vec ref = kepler_circular_state(prm.s_tilde);
  auto radius = [](std::span<const double> x) {
    if (!(x[0] > kRadiusFloor)) fail(ErrorKind::RadiusCollapse, "orbit radius collapsed");
    return x[0];
  };

  ProblemData d;
  d.name = "kepler";
  d.dims = {3, 1, 2};
  d.running_cost = [ref](std::span<const double> x) {
    double c = 0.0;
    for (int i = 0; i < 3; ++i) c += (x[i] - ref[i]) * (x[i] - ref[i]);
    return 0.5 * c;
  };
  d.shape_drift = [radius](std::span<const double> x) {
    const double s = radius(x), vs = x[1], vt = x[2];
    return Vec{vs, s * vt * vt - 1.0 / (s * s), -2.0 * vs * vt / s};
  };
  d.shape_control = [radius](std::span<const double> x) {
    const double s = radius(x);
    return Matrix{{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0 / (s * s)}};
  };
  d.cyclic_drift = [](std::span<const double> x) { return Vec{x[2]}; };
  d.cyclic_control = [](std::span<const double>) { return Matrix(1, 2); };
  d.control_weight = Matrix::identity(2);

  d.running_cost_gradient = [ref](std::span<const double> x) {
    return Vec{x[0] - ref[0], x[1] - ref[1], x[2] - ref[2]};
  };
  d.shape_drift_jacobian = [radius](std::span<const double> x) {
    const double s = radius(x), vs = x[1], vt = x[2];
    return Matrix{{0.0, 1.0, 0.0},
                  {vt * vt + 2.0 / (s * s * s), 0.0, 2.0 * s * vt},
                  {2.0 * vs * vt / (s * s), -2.0 * vt / s, -2.0 * vs / s}};
  };
  d.cyclic_drift_jacobian = [](std::span<const double>) { return Matrix{{0.0, 0.0, 1.0}}; };
  d.shape_control_gradient = [radius](std::span<const double> x, std::span<const double> w,
                                      std::span<const double> u) {
    const double s = radius(x);
    return Vec{-2.0 * w[2] * u[1] / (s * s * s), 0.0, 0.0};
  };
  d.cyclic_control_gradient = [](std::span<const double>, std::span<const double>, std::span<const double>) {
    return Vec{0.0, 0.0, 0.0};
  };
  d.reduced_jacobian = [radius](std::span<const double> x, std::span<const double> p, std::span<const double>) {
    const double s = radius(x), vs = x[1], vt = x[2];
    const double pvs = p[1], pvt = p[2];
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s, s6 = s5 * s;
    Matrix a{{0.0, 1.0, 0.0},
             {vt * vt + 2.0 / s3, 0.0, 2.0 * s * vt},
             {2.0 * vs * vt / s2 + 4.0 * pvt / s5, -2.0 * vt / s, -2.0 * vs / s}};
    Matrix c{{6.0 * pvs / s4 + 4.0 * pvt * vs * vt / s3 - 1.0 + 10.0 * pvt * pvt / s6, -2.0 * pvt * vt / s2,
              -2.0 * pvs * vt - 2.0 * pvt * vs / s2},
             {-2.0 * pvt * vt / s2, -1.0, 2.0 * pvt / s},
             {-2.0 * pvs * vt - 2.0 * pvt * vs / s2, 2.0 * pvt / s, -2.0 * pvs * s - 1.0}};
    Matrix j(6, 6);
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) {
        j(r, k) = a(r, k);
        j(3 + r, k) = c(r, k);
        j(3 + r, 3 + k) = -a(k, r);
      }
    }
    j(1, 4) = -1.0;       // ∂v̇_s/∂p_vs
    j(2, 5) = -1.0 / s4;  // ∂v̇_θ/∂p_vθ
    return j;
  };

  d.x0 = prm.x0.value_or(kepler_circular_state(7.0));
  d.xT = prm.xT.value_or(kepler_circular_state(3.0));
  d.y0 = {prm.theta0};
  d.yT = {prm.theta_T.value_or(std::numbers::pi * prm.T)};
  d.horizon = prm.T;
  return CyclicProblem(std::move(d));
}

}  // namespace trimturn
