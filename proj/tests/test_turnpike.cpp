#include <gtest/gtest.h>

#include <cmath>

#include "trimturn/problems.hpp"
#include "trimturn/shooting.hpp"
#include "trimturn/steady.hpp"
#include "trimturn/turnpike.hpp"

using namespace trimturn;

namespace {

struct LqCase {
  CyclicProblem pb;
  ExtremalSolution sol;
  SteadyPoint sp;
  HyperbolicityReport rep;
};

LqCase lq_case(double T, double yT = 3.0) {
  const CyclicProblem pb = lq_problem({.yT = yT, .T = T});
  ExtremalSolution sol = solve_bvp(pb);
  SteadyPoint sp = solve_static(pb, sol.lambda);
  HyperbolicityReport rep = check_hyperbolicity(pb, sp);
  return {pb, std::move(sol), std::move(sp), std::move(rep)};
}

ExtremalSolution sampled(double T, std::size_t intervals, const std::function<double(double)>& y,
                         const std::function<double(double)>& ydot) {
  ExtremalSolution s;
  s.T = T;
  s.times = uniform_grid(0.0, T, intervals);
  for (double t : s.times) {
    s.y.push_back({y(t)});
    s.ydot.push_back({ydot(t)});
  }
  return s;
}

}  // namespace

TEST(BuildTrim, ZeroVelocityIsConstant) {
  SteadyPoint sp;
  sp.trim_velocity = {0.0, 0.0};
  const Vec times = uniform_grid(0.0, 8.0, 16);
  const TrimReference tr = build_trim(sp, 8.0, Vec{1.5, -2.0}, times);
  for (const auto& v : tr.values) {
    EXPECT_EQ(v[0], 1.5);
    EXPECT_EQ(v[1], -2.0);
  }
}

TEST(BuildTrim, LqSlope) {
  const CyclicProblem pb = lq_problem();
  const SteadyPoint sp = solve_static(pb, Vec{-2.7});
  const TrimReference tr = build_trim(sp, 20.0, Vec{4.0});
  EXPECT_NEAR(tr.trim_velocity[0], 1.35, 1e-12);
  EXPECT_NEAR(tr.value_at(10.0)[0], 4.0, 1e-15);
  EXPECT_NEAR(tr.value_at(12.0)[0] - tr.value_at(10.0)[0], 2.7, 1e-12);
}

TEST(BuildTrim, KeplerVelocityIsAngularRate) {
  const CyclicProblem pb = kepler_problem();
  const SteadyPoint sp = solve_static(pb, Vec{-0.12}, kepler_circular_state(kepler_default_radius()));
  const TrimReference tr = build_trim(sp, 100.0, Vec{50.0});
  EXPECT_NEAR(tr.trim_velocity[0], sp.xbar[2], 1e-14);
}

TEST(BuildTrim, RejectsNonPositiveHorizon) {
  SteadyPoint sp;
  sp.trim_velocity = {0.0};
  EXPECT_THROW(build_trim(sp, 0.0, Vec{0.0}), Error);
}

TEST(BuildTrim, AnchorTranslationShiftsUniformly) {
  const SteadyPoint sp = solve_static(lq_problem(), Vec{0.9});
  const Vec times = uniform_grid(0.0, 30.0, 60);
  const TrimReference a = build_trim(sp, 30.0, Vec{2.0}, times);
  const TrimReference b = build_trim(sp, 30.0, Vec{2.0 + 0.375}, times);
  for (std::size_t i = 0; i < times.size(); ++i) EXPECT_NEAR(b.values[i][0] - a.values[i][0], 0.375, 1e-14);
}

TEST(Anchor, NodeValueWhenMidpointIsSampled) {
  const ExtremalSolution s = sampled(10.0, 10, [](double t) { return std::sin(t); }, [](double t) { return std::cos(t); });
  EXPECT_EQ(anchor_from_solution(s)[0], std::sin(5.0));
}

TEST(Anchor, InterpolatesBetweenSamples) {
  // odd interval count: T/2 falls between samples; Hermite is exact on cubics
  auto y = [](double t) { return 0.1 * t * t * t - t + 2.0; };
  auto dy = [](double t) { return 0.3 * t * t - 1.0; };
  const ExtremalSolution s = sampled(9.0, 9, y, dy);
  EXPECT_NEAR(anchor_from_solution(s)[0], y(4.5), 1e-12);
}

TEST(Anchor, LqClosedForm) {
  const LqCase c = lq_case(20.0, 4.0);
  EXPECT_NEAR(anchor_from_solution(c.sol)[0], lq_exact(1.0, 2.0, 0.0, 4.0, 20.0).y(10.0), 1e-8);
}

TEST(Anchor, TrimExactSolution) {
  const double lam = -1.0, xbar = 0.5, T = 16.0;
  const CyclicProblem pb = lq_problem({.x0 = xbar, .xT = xbar, .y0 = 1.0, .yT = 1.0 + T * xbar, .T = T});
  const ExtremalSolution sol = solve_bvp(pb);
  EXPECT_NEAR(sol.lambda[0], lam, 1e-8);
  EXPECT_NEAR(anchor_from_solution(sol)[0], 1.0 + 0.5 * T * xbar, 1e-8);
}

TEST(Anchor, TooCoarseGrid) {
  ExtremalSolution s;
  s.T = 1.0;
  s.times = {0.0};
  s.y = {{0.0}};
  EXPECT_THROW(anchor_from_solution(s), Error);
}

TEST(FitEnvelope, RecoversItsOwnModel) {
  const double T = 30.0;
  const Vec t = uniform_grid(0.0, T, 600);
  Vec d(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) d[i] = 5.0 * (std::exp(-2.0 * t[i]) + std::exp(-2.0 * (T - t[i])));
  const EnvelopeFit f = fit_envelope(t, d, T, 2.0);
  EXPECT_NEAR(f.mu_fit, 2.0, 1e-3);
  EXPECT_NEAR(f.C_fit, 5.0, 1e-2);
  EXPECT_EQ(f.max_relative_violation, 0.0);
  EXPECT_NEAR(f.boundary_layer, 1.5, 1e-15);
}

TEST(FitEnvelope, LqRateNearOne) {
  const LqCase c = lq_case(20.0);
  Vec d(c.sol.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(c.sol.x[i][0] - c.sp.xbar[0]);
  const EnvelopeFit f = fit_envelope(c.sol.times, d, c.sol.T, c.rep.mu_star);
  EXPECT_NEAR(f.mu_fit, 1.0, 0.1);
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] >= f.resolution) EXPECT_LE(d[i], f.C_fit * envelope_shape(f.mu_fit, c.sol.times[i], c.sol.T) * (1 + 1e-12));
}

TEST(FitEnvelope, ZeroDeviationIsDegenerate) {
  const Vec t = uniform_grid(0.0, 20.0, 100);
  const Vec d(t.size(), 0.0);
  try {
    fit_envelope(t, d, 20.0, 1.0);
    FAIL() << "expected DegenerateFit";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DegenerateFit);
  }
}

TEST(FitEnvelope, ShortHorizonLeavesNoWindow) {
  const Vec t = uniform_grid(0.0, 4.0, 100);
  const Vec d(t.size(), 1.0);
  try {
    fit_envelope(t, d, 4.0, 1.0);
    FAIL() << "expected WindowEmpty";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WindowEmpty);
  }
}

TEST(Certify, LqCertificate) {
  const LqCase c = lq_case(20.0);
  const TurnpikeCertificate cert = certify(c.pb, c.sol, c.sp, c.rep);
  ASSERT_TRUE(cert.fit_available) << cert.fit_note;
  EXPECT_FALSE(cert.exact_turnpike);
  EXPECT_NEAR(cert.mu_star, 1.0, 1e-12);
  EXPECT_NEAR(cert.mu_fit, 1.0, 0.1);
  EXPECT_EQ(cert.max_relative_violation, 0.0);
  EXPECT_LE(cert.anchor_deviation, 1e-12);
  EXPECT_NEAR(cert.epsilon_data, std::abs(c.sp.xbar[0] - 1.0) + std::abs(c.sp.xbar[0] - 2.0), 1e-15);
  // every resolved sample lies under the envelope
  for (std::size_t i = 0; i < cert.times.size(); ++i) {
    const double d = cert.dev_x[i] + cert.dev_u[i];
    if (d >= cert.resolution) EXPECT_LE(d, cert.envelope[i] * (1 + 1e-12));
  }
}

TEST(Certify, TrimExactFlag) {
  const double xbar = -0.25, T = 20.0;
  const CyclicProblem pb = lq_problem({.x0 = xbar, .xT = xbar, .y0 = 0.0, .yT = T * xbar, .T = T});
  ShootingConfig cfg;
  const SteadyPoint sp0 = solve_static(pb, Vec{-2.0 * xbar});
  cfg.init = trim_start(pb, sp0).second;
  const ExtremalSolution sol = solve_bvp(pb, cfg);
  const SteadyPoint sp = solve_static(pb, sol.lambda);
  const TurnpikeCertificate cert = certify(pb, sol, sp, check_hyperbolicity(pb, sp));
  EXPECT_TRUE(cert.exact_turnpike);
  EXPECT_LE(cert.max_dev_x, 1e-9);
  EXPECT_LE(cert.max_dev_u, 1e-9);
  EXPECT_LE(cert.max_dev_y, 1e-9);
}

TEST(Certify, LambdaMismatch) {
  const LqCase c = lq_case(20.0);
  const SteadyPoint other = solve_static(c.pb, Vec{c.sol.lambda[0] + 1e-3});
  try {
    certify(c.pb, c.sol, other, check_hyperbolicity(c.pb, other));
    FAIL() << "expected LambdaMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LambdaMismatch);
  }
}

TEST(Certify, FlatNlqCyclicChannelsDecayToTheMiddle) {
  const CyclicProblem pb = nlq_problem();
  const ExtremalSolution sol = solve_bvp(pb);
  const SteadyPoint sp = solve_static(pb, sol.lambda, Vec{0.0});
  const TurnpikeCertificate cert = certify(pb, sol, sp, check_hyperbolicity(pb, sp));
  const std::size_t mid = sol.size() / 2;
  EXPECT_LE(cert.dev_x[mid] + cert.dev_u[mid], 1e-3 * (cert.dev_x[0] + cert.dev_u[0]));
  EXPECT_LE(cert.anchor_deviation, 1e-12);
  for (std::size_t j = 0; j < 2; ++j) {
    const double start = std::abs(sol.y[0][j] - cert.trim.values[0][j]);
    const double end = std::abs(sol.y.back()[j] - cert.trim.values.back()[j]);
    const double middle = std::abs(sol.y[mid][j] - cert.trim.values[mid][j]);
    EXPECT_LT(middle, 1e-3 * start) << j;
    EXPECT_LT(middle, 1e-3 * end) << j;
  }
}

TEST(Certify, ConstantsStableAcrossHorizons) {
  std::vector<double> C;
  for (double T : {20.0, 40.0, 80.0}) {
    const LqCase c = lq_case(T);
    const TurnpikeCertificate cert = certify(c.pb, c.sol, c.sp, c.rep);
    ASSERT_TRUE(cert.fit_available) << T << ": " << cert.fit_note;
    EXPECT_NEAR(cert.mu_fit, 1.0, 0.1) << T;
    C.push_back(cert.C_fit);
  }
  const double lo = *std::min_element(C.begin(), C.end()), hi = *std::max_element(C.begin(), C.end());
  EXPECT_LE(hi, 2.0 * lo);
}
