#pragma once

// Problem class: shape state x ∈ Rⁿ, cyclic state y ∈ Rᵖ, control u ∈ Rᵐ,
//
//   min ∫ f0(x) + ½ uᵀRu dt
//   ẋ = f1(x) + F2(x) u,   ẏ = g1(x) + G2(x) u,
//   x(0)=x0, x(T)=xT, y(0)=y0, y(T)=yT.
//
// Evaluators depend on x only. Missing derivative callbacks fall back to
// central finite differences.

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trimturn/error.hpp"
#include "trimturn/linalg.hpp"

namespace trimturn {

struct Dims {
  std::size_t n = 1;  // shape
  std::size_t p = 1;  // cyclic
  std::size_t m = 1;  // control
};

using ScalarField = std::function<double(std::span<const double>)>;
using VectorField = std::function<Vec(std::span<const double>)>;
using MatrixField = std::function<Matrix(std::span<const double>)>;
/// (x, w, u) ↦ ∇ₓ(wᵀ F(x) u) for a matrix field F.
using ContractionGradient =
    std::function<Vec(std::span<const double>, std::span<const double>, std::span<const double>)>;
/// (x, p_x, λ) ↦ Jacobian of the reduced Hamiltonian field with respect to (x, p_x).
using ReducedJacobian =
    std::function<Matrix(std::span<const double>, std::span<const double>, std::span<const double>)>;

inline constexpr double kDefaultRelativeStep = 1e-6;

/// Central-difference step for component value v.
inline double fd_step(double v, double rel = kDefaultRelativeStep) { return rel * std::max(1.0, std::abs(v)); }

/// Jacobian of a vector field, central differences with componentwise step
/// max(rel, rel·|xᵢ|).
inline Matrix jacobian(const VectorField& field, std::span<const double> x, double rel = kDefaultRelativeStep) {
  Vec xp(x.begin(), x.end());
  Matrix jac;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = fd_step(x[j], rel);
    xp[j] = x[j] + h;
    Vec fp = field(xp);
    xp[j] = x[j] - h;
    Vec fm = field(xp);
    xp[j] = x[j];
    if (j == 0) jac = Matrix(fp.size(), x.size());
    if (fp.size() != jac.rows() || fm.size() != jac.rows()) fail(ErrorKind::ShapeMismatch, "field output size varies");
    for (std::size_t i = 0; i < fp.size(); ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  if (!jac.all_finite()) fail(ErrorKind::EvaluatorFailure, "non-finite finite-difference Jacobian");
  return jac;
}

inline Vec gradient(const ScalarField& field, std::span<const double> x, double rel = kDefaultRelativeStep) {
  Vec xp(x.begin(), x.end());
  Vec g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = fd_step(x[j], rel);
    xp[j] = x[j] + h;
    const double fp = field(xp);
    xp[j] = x[j] - h;
    const double fm = field(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  if (!all_finite(g)) fail(ErrorKind::EvaluatorFailure, "non-finite finite-difference gradient");
  return g;
}

/// ∇ₓ(wᵀ F(x) u): differentiates the scalar contraction instead of forming
/// the 3-index derivative of F.
inline Vec contraction_gradient(const MatrixField& field, std::span<const double> x, std::span<const double> w,
                                std::span<const double> u, double rel = kDefaultRelativeStep) {
  return gradient([&](std::span<const double> z) { return dot(w, field(z) * u); }, x, rel);
}

/// The matrix DF(x)[·]u: column j is (∂F/∂xⱼ) u.
inline Matrix control_matrix_derivative(const MatrixField& field, std::span<const double> x, std::span<const double> u,
                                        double rel = kDefaultRelativeStep) {
  return jacobian([&](std::span<const double> z) { return field(z) * u; }, x, rel);
}

/// Raw problem description. Derivative callbacks are optional.
struct ProblemData {
  std::string name = "custom";
  Dims dims;
  ScalarField running_cost;    // f0
  VectorField shape_drift;     // f1
  MatrixField shape_control;   // F2, n×m
  VectorField cyclic_drift;    // g1
  MatrixField cyclic_control;  // G2, p×m
  Matrix control_weight;       // R, m×m

  VectorField running_cost_gradient;            // ∇f0
  MatrixField shape_drift_jacobian;             // Df1, n×n
  MatrixField cyclic_drift_jacobian;            // Dg1, p×n
  ContractionGradient shape_control_gradient;   // ∇ₓ(wᵀF2(x)u)
  ContractionGradient cyclic_control_gradient;  // ∇ₓ(wᵀG2(x)u)
  ReducedJacobian reduced_jacobian;             // optional second-order data

  Vec x0, xT, y0, yT;
  double horizon = 1.0;
};

struct ValidationCheck {
  std::string name;
  bool passed = true;
  std::string detail;
  std::optional<ErrorKind> kind;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
  std::optional<ErrorKind> first_error() const {
    for (const auto& c : checks)
      if (!c.passed) return c.kind;
    return std::nullopt;
  }
  bool operator==(const ValidationReport& o) const {
    if (checks.size() != o.checks.size()) return false;
    for (std::size_t i = 0; i < checks.size(); ++i) {
      const auto& a = checks[i];
      const auto& b = o.checks[i];
      if (a.name != b.name || a.passed != b.passed || a.detail != b.detail || a.kind != b.kind) return false;
    }
    return true;
  }
};

namespace detail {

inline std::string weight_problem(const Matrix& r) {
  if (!r.square() || r.rows() == 0) return "control weight is not square";
  for (std::size_t i = 0; i < r.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(r(i, j) - r(j, i)) > 1e-12) return "control weight is not symmetric";
  const Spectrum s = eigenvalues(r);
  for (auto ev : s.eigenvalues)
    if (!(ev.real() > 0.0)) return "control weight has a non-positive eigenvalue";
  return {};
}

}  // namespace detail

/// Immutable problem instance. Safe to share across threads.
class CyclicProblem {
 public:
  explicit CyclicProblem(ProblemData data) : data_(std::move(data)), weight_factor_(make_factor(data_)) {
    const Dims& d = data_.dims;
    if (d.n < 1 || d.p < 1 || d.m < 1) fail(ErrorKind::ShapeMismatch, "dimensions must be positive");
    if (!(data_.horizon > 0.0)) fail(ErrorKind::ShapeMismatch, "horizon must be positive");
    if (data_.x0.size() != d.n || data_.xT.size() != d.n) fail(ErrorKind::ShapeMismatch, "shape boundary values");
    if (data_.y0.size() != d.p || data_.yT.size() != d.p) fail(ErrorKind::ShapeMismatch, "cyclic boundary values");
    if (!data_.running_cost || !data_.shape_drift || !data_.shape_control || !data_.cyclic_drift ||
        !data_.cyclic_control) {
      fail(ErrorKind::ShapeMismatch, "missing evaluator");
    }
  }

  const ProblemData& data() const noexcept { return data_; }
  const std::string& name() const noexcept { return data_.name; }
  const Dims& dims() const noexcept { return data_.dims; }
  double horizon() const noexcept { return data_.horizon; }
  const Vec& x0() const noexcept { return data_.x0; }
  const Vec& xT() const noexcept { return data_.xT; }
  const Vec& y0() const noexcept { return data_.y0; }
  const Vec& yT() const noexcept { return data_.yT; }
  const Matrix& control_weight() const noexcept { return data_.control_weight; }
  bool has_reduced_jacobian() const noexcept { return static_cast<bool>(data_.reduced_jacobian); }

  CyclicProblem with_horizon(double horizon) const {
    ProblemData d = data_;
    d.horizon = horizon;
    return CyclicProblem(std::move(d));
  }

  CyclicProblem with_boundary(Vec x0, Vec xT, Vec y0, Vec yT) const {
    ProblemData d = data_;
    d.x0 = std::move(x0);
    d.xT = std::move(xT);
    d.y0 = std::move(y0);
    d.yT = std::move(yT);
    return CyclicProblem(std::move(d));
  }

  // ---- checked evaluators ----

  double running_cost(std::span<const double> x) const {
    check_input(x);
    const double v = data_.running_cost(x);
    if (!std::isfinite(v)) fail(ErrorKind::EvaluatorFailure, "running cost is not finite");
    return v;
  }
  Vec shape_drift(std::span<const double> x) const {
    return checked_vector(data_.shape_drift(checked(x)), dims().n, "f1");
  }
  Matrix shape_control(std::span<const double> x) const {
    return checked_matrix(data_.shape_control(checked(x)), dims().n, dims().m, "F2");
  }
  Vec cyclic_drift(std::span<const double> x) const {
    return checked_vector(data_.cyclic_drift(checked(x)), dims().p, "g1");
  }
  Matrix cyclic_control(std::span<const double> x) const {
    return checked_matrix(data_.cyclic_control(checked(x)), dims().p, dims().m, "G2");
  }

  // ---- derivatives (analytic when supplied) ----

  Vec running_cost_gradient(std::span<const double> x) const {
    if (data_.running_cost_gradient) {
      return checked_vector(data_.running_cost_gradient(checked(x)), dims().n, "grad f0");
    }
    return gradient([this](std::span<const double> z) { return running_cost(z); }, x);
  }
  Matrix shape_drift_jacobian(std::span<const double> x) const {
    if (data_.shape_drift_jacobian) {
      return checked_matrix(data_.shape_drift_jacobian(checked(x)), dims().n, dims().n, "Df1");
    }
    return jacobian([this](std::span<const double> z) { return shape_drift(z); }, x);
  }
  Matrix cyclic_drift_jacobian(std::span<const double> x) const {
    if (data_.cyclic_drift_jacobian) {
      return checked_matrix(data_.cyclic_drift_jacobian(checked(x)), dims().p, dims().n, "Dg1");
    }
    return jacobian([this](std::span<const double> z) { return cyclic_drift(z); }, x);
  }
  /// ∇ₓ(wᵀF2(x)u), w ∈ Rⁿ.
  Vec shape_control_gradient(std::span<const double> x, std::span<const double> w, std::span<const double> u) const {
    if (data_.shape_control_gradient) {
      return checked_vector(data_.shape_control_gradient(checked(x), w, u), dims().n, "DF2 contraction");
    }
    return contraction_gradient([this](std::span<const double> z) { return shape_control(z); }, x, w, u);
  }
  /// ∇ₓ(wᵀG2(x)u), w ∈ Rᵖ.
  Vec cyclic_control_gradient(std::span<const double> x, std::span<const double> w, std::span<const double> u) const {
    if (data_.cyclic_control_gradient) {
      return checked_vector(data_.cyclic_control_gradient(checked(x), w, u), dims().n, "DG2 contraction");
    }
    return contraction_gradient([this](std::span<const double> z) { return cyclic_control(z); }, x, w, u);
  }

  /// R⁻¹v through the Cholesky factor computed at construction.
  Vec solve_weight(std::span<const double> v) const { return weight_factor_.solve(v); }

 private:
  static Cholesky make_factor(const ProblemData& d) {
    if (const std::string why = detail::weight_problem(d.control_weight); !why.empty()) {
      fail(ErrorKind::NonSPDWeight, why);
    }
    if (d.control_weight.rows() != d.dims.m) fail(ErrorKind::ShapeMismatch, "control weight is not m×m");
    return Cholesky(d.control_weight);
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != dims().n) fail(ErrorKind::ShapeMismatch, "evaluator input has wrong length");
    if (!all_finite(x)) fail(ErrorKind::EvaluatorFailure, "non-finite evaluator input");
  }
  std::span<const double> checked(std::span<const double> x) const {
    check_input(x);
    return x;
  }
  static Vec checked_vector(Vec v, std::size_t size, const char* what) {
    if (v.size() != size) fail(ErrorKind::ShapeMismatch, std::string(what) + " returned wrong length");
    if (!all_finite(v)) fail(ErrorKind::EvaluatorFailure, std::string(what) + " returned non-finite values");
    return v;
  }
  static Matrix checked_matrix(Matrix m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) fail(ErrorKind::ShapeMismatch, std::string(what) + " has wrong shape");
    if (!m.all_finite()) fail(ErrorKind::EvaluatorFailure, std::string(what) + " returned non-finite values");
    return m;
  }

  ProblemData data_;
  Cholesky weight_factor_;
};

/// Checks every invariant of a problem: evaluates each callback at x0 and xT
/// and re-verifies the control weight. Pure; never throws for evaluator
/// failures, which are reported as failed checks instead.
inline ValidationReport validate(const CyclicProblem& problem) {
  ValidationReport report;
  const Dims& d = problem.dims();
  report.checks.push_back({"dimensions", d.n >= 1 && d.p >= 1 && d.m >= 1, "", ErrorKind::ShapeMismatch});
  report.checks.push_back({"horizon", problem.horizon() > 0.0, "", ErrorKind::ShapeMismatch});
  {
    const std::string why = detail::weight_problem(problem.control_weight());
    report.checks.push_back({"control_weight", why.empty(), why, ErrorKind::NonSPDWeight});
  }
  auto probe = [&](const std::string& name, auto&& fn) {
    for (const auto* point : {&problem.x0(), &problem.xT()}) {
      const std::string where = point == &problem.x0() ? "@x0" : "@xT";
      try {
        fn(*point);
        report.checks.push_back({name + where, true, "", std::nullopt});
      } catch (const Error& e) {
        report.checks.push_back({name + where, false, e.what(), e.kind()});
      } catch (const std::exception& e) {
        report.checks.push_back({name + where, false, e.what(), ErrorKind::EvaluatorFailure});
      }
    }
  };
  const Vec wn(d.n, 1.0), wp(d.p, 1.0), um(d.m, 1.0);
  probe("f0", [&](const Vec& x) { problem.running_cost(x); });
  probe("f1", [&](const Vec& x) { problem.shape_drift(x); });
  probe("F2", [&](const Vec& x) { problem.shape_control(x); });
  probe("g1", [&](const Vec& x) { problem.cyclic_drift(x); });
  probe("G2", [&](const Vec& x) { problem.cyclic_control(x); });
  probe("grad_f0", [&](const Vec& x) { problem.running_cost_gradient(x); });
  probe("D_f1", [&](const Vec& x) { problem.shape_drift_jacobian(x); });
  probe("D_g1", [&](const Vec& x) { problem.cyclic_drift_jacobian(x); });
  probe("D_F2", [&](const Vec& x) { problem.shape_control_gradient(x, wn, um); });
  probe("D_G2", [&](const Vec& x) { problem.cyclic_control_gradient(x, wp, um); });
  return report;
}

}  // namespace trimturn
