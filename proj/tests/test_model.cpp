#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "trimturn/model.hpp"
#include "trimturn/problems.hpp"

using namespace trimturn;

namespace {

// independent oracle: plain central differences with a fixed step
Matrix fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  const Vec f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    Vec a = x, b = x;
    a[k] += h;
    b[k] -= h;
    const Vec fa = f(a), fb = f(b);
    for (std::size_t i = 0; i < f0.size(); ++i) j(i, k) = (fa[i] - fb[i]) / (2.0 * h);
  }
  return j;
}

void expect_close(const Matrix& a, const Matrix& b, double rel, const std::string& what) {
  ASSERT_EQ(a.rows(), b.rows()) << what;
  ASSERT_EQ(a.cols(), b.cols()) << what;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      EXPECT_NEAR(a(i, j), b(i, j), rel * std::max(1.0, std::abs(b(i, j)))) << what << " (" << i << "," << j << ")";
}

Matrix column(const Vec& v) {
  Matrix m(1, v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m(0, i) = v[i];
  return m;
}

std::vector<CyclicProblem> builtins() {
  return {lq_problem(), nlq_problem(), nlq_problem({.alpha = 0.1}), kepler_problem()};
}

Vec random_point(const CyclicProblem& pb, std::mt19937& rng) {
  std::uniform_real_distribution<double> box(-5.0, 5.0);
  Vec x(pb.dims().n);
  for (double& v : x) v = box(rng);
  // the orbit radius must stay away from the collapse floor
  if (pb.name() == "kepler") x[0] = std::uniform_real_distribution<double>(0.5, 5.0)(rng);
  return x;
}

}  // namespace

TEST(Validate, LqPasses) {
  const ValidationReport r = validate(lq_problem());
  EXPECT_TRUE(r.passed());
  EXPECT_FALSE(r.first_error().has_value());
}

TEST(Validate, ZeroWeightIsNotSpd) {
  ProblemData d = lq_problem().data();
  d.control_weight = Matrix{{0.0}};
  try {
    CyclicProblem bad(d);
    FAIL() << "expected NonSPDWeight";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonSPDWeight);
  }
}

TEST(Validate, KeplerPasses) { EXPECT_TRUE(validate(kepler_problem()).passed()); }

TEST(Validate, ReportsWrongShapeAsFailedCheck) {
  ProblemData d = lq_problem().data();
  d.cyclic_drift = [](std::span<const double>) { return Vec{0.0, 0.0}; };
  const ValidationReport r = validate(CyclicProblem(d));
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.first_error(), ErrorKind::ShapeMismatch);
}

TEST(Validate, IsPure) {
  for (const auto& pb : builtins()) EXPECT_TRUE(validate(pb) == validate(pb)) << pb.name();
}

TEST(Jacobian, ConstantFieldGivesZero) {
  const CyclicProblem pb = lq_problem();
  for (double x : {-3.0, 0.0, 7.5}) EXPECT_EQ(pb.shape_drift_jacobian(Vec{x})(0, 0), 0.0);
  const Matrix fd = jacobian([&](std::span<const double> z) { return pb.shape_drift(z); }, Vec{2.0});
  EXPECT_EQ(fd(0, 0), 0.0);
}

TEST(Jacobian, KeplerRadialRateAtUnitOrbit) {
  const CyclicProblem pb = kepler_problem();
  const Vec x{1.0, 0.0, 1.0};
  EXPECT_NEAR(pb.shape_drift_jacobian(x)(1, 0), 3.0, 1e-14);
  const Matrix fd = jacobian([&](std::span<const double> z) { return pb.shape_drift(z); }, x);
  EXPECT_NEAR(fd(1, 0), 3.0, 1e-8);
}

TEST(Jacobian, FlatCyclicControlContraction) {
  const CyclicProblem pb = nlq_problem();
  const Vec x{2.0}, u{1.0, 0.0};
  // ∂/∂x of wᵀG2(x)u with w = e₂ picks the x² entry: 2x·u₁ = 4
  EXPECT_NEAR(pb.cyclic_control_gradient(x, Vec{0.0, 1.0}, u)[0], 4.0, 1e-14);
  EXPECT_NEAR(pb.cyclic_control_gradient(x, Vec{1.0, 0.0}, u)[0], 0.0, 1e-14);
  const Vec fd = contraction_gradient([&](std::span<const double> z) { return pb.cyclic_control(z); }, x,
                                      Vec{0.0, 1.0}, u);
  EXPECT_NEAR(fd[0], 4.0, 1e-8);
}

TEST(Jacobian, FallbackStepIsRelative) {
  EXPECT_DOUBLE_EQ(fd_step(0.5), 1e-6);
  EXPECT_DOUBLE_EQ(fd_step(-300.0), 3e-4);
}

TEST(Jacobian, EvaluatorFailureReported) {
  ProblemData d = lq_problem().data();
  d.shape_drift = [](std::span<const double>) { return Vec{std::nan("")}; };
  const CyclicProblem pb(d);
  try {
    pb.shape_drift(Vec{1.0});
    FAIL() << "expected EvaluatorFailure";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EvaluatorFailure);
  }
}

TEST(Jacobian, AnalyticMatchesFiniteDifferencesOnBuiltins) {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (const auto& pb : builtins()) {
    const Dims d = pb.dims();
    for (int trial = 0; trial < 20; ++trial) {
      const Vec x = random_point(pb, rng);
      Vec wn(d.n), wp(d.p), u(d.m);
      for (double& v : wn) v = unit(rng);
      for (double& v : wp) v = unit(rng);
      for (double& v : u) v = unit(rng);
      const std::string tag = pb.name() + " trial " + std::to_string(trial);

      expect_close(pb.shape_drift_jacobian(x), fd_jacobian([&](const Vec& z) { return pb.shape_drift(z); }, x),
                   1e-5, tag + " Df1");
      expect_close(pb.cyclic_drift_jacobian(x), fd_jacobian([&](const Vec& z) { return pb.cyclic_drift(z); }, x),
                   1e-5, tag + " Dg1");
      expect_close(column(pb.running_cost_gradient(x)),
                   fd_jacobian([&](const Vec& z) { return Vec{pb.running_cost(z)}; }, x), 1e-5, tag + " grad f0");
      expect_close(column(pb.shape_control_gradient(x, wn, u)),
                   fd_jacobian([&](const Vec& z) { return Vec{dot(wn, pb.shape_control(z) * u)}; }, x), 1e-5,
                   tag + " DF2");
      expect_close(column(pb.cyclic_control_gradient(x, wp, u)),
                   fd_jacobian([&](const Vec& z) { return Vec{dot(wp, pb.cyclic_control(z) * u)}; }, x), 1e-5,
                   tag + " DG2");
    }
  }
}

TEST(Problem, RejectsWrongInputLength) {
  const CyclicProblem pb = kepler_problem();
  EXPECT_THROW(pb.shape_drift(Vec{1.0, 0.0}), Error);
}

TEST(Problem, WithHorizonKeepsDataAndRejectsNonPositive) {
  const CyclicProblem pb = lq_problem();
  const CyclicProblem q = pb.with_horizon(7.0);
  EXPECT_EQ(q.horizon(), 7.0);
  EXPECT_EQ(q.x0(), pb.x0());
  EXPECT_EQ(pb.horizon(), 20.0);
  EXPECT_THROW(pb.with_horizon(0.0), Error);
}

TEST(Problem, SolveWeightInvertsR) {
  const CyclicProblem pb = lq_problem();
  EXPECT_DOUBLE_EQ(pb.solve_weight(Vec{3.0})[0], 1.5);
}
