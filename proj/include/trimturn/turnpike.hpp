#pragma once

// Trim reference anchored at the midpoint, deviation channels, exponential
// envelope fit and the resulting turnpike certificate.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trimturn/error.hpp"
#include "trimturn/linalg.hpp"
#include "trimturn/model.hpp"
#include "trimturn/shooting.hpp"
#include "trimturn/steady.hpp"

namespace trimturn {

struct TrimReference {
  SteadyPoint steady;
  double T = 0.0;
  double anchor_time = 0.0;
  Vec anchor_value;
  Vec trim_velocity;
  Vec times;
  std::vector<Vec> values;

  Vec value_at(double t) const { return anchor_value + (t - anchor_time) * trim_velocity; }
};

/// ȳ(t) = anchor + (t − T/2)·v, sampled on `times`.
inline TrimReference build_trim(const SteadyPoint& sp, double T, std::span<const double> anchor_value,
                                std::span<const double> times = {}) {
  if (!(T > 0.0)) fail(ErrorKind::ConfigError, "horizon must be positive");
  if (anchor_value.size() != sp.trim_velocity.size()) fail(ErrorKind::ShapeMismatch, "anchor size");
  TrimReference tr;
  tr.steady = sp;
  tr.T = T;
  tr.anchor_time = 0.5 * T;
  tr.anchor_value.assign(anchor_value.begin(), anchor_value.end());
  tr.trim_velocity = sp.trim_velocity;
  tr.times.assign(times.begin(), times.end());
  tr.values.reserve(times.size());
  for (double t : times) tr.values.push_back(tr.value_at(t));
  return tr;
}

/// y(T/2): the node value if T/2 is a sample, otherwise cubic Hermite
/// interpolation with the stored cyclic velocities.
inline Vec anchor_from_solution(const ExtremalSolution& sol) {
  const Vec& ts = sol.times;
  if (ts.size() < 2) fail(ErrorKind::GridTooCoarse, "solution grid has fewer than two samples");
  const double half = 0.5 * sol.T;
  if (half < ts.front() || half > ts.back()) fail(ErrorKind::GridTooCoarse, "grid does not bracket T/2");
  const auto it = std::lower_bound(ts.begin(), ts.end(), half);
  const std::size_t j = static_cast<std::size_t>(it - ts.begin());
  if (j < ts.size() && std::abs(ts[j] - half) <= 1e-12 * std::max(1.0, sol.T)) return sol.y[j];
  const std::size_t i = j - 1;
  const double h = ts[i + 1] - ts[i];
  const double s = (half - ts[i]) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  Vec out(sol.y[i].size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = h00 * sol.y[i][k] + h10 * h * sol.ydot[i][k] + h01 * sol.y[i + 1][k] + h11 * h * sol.ydot[i + 1][k];
  }
  return out;
}

struct EnvelopeOptions {
  double boundary_layer_factor = 3.0;  // t_bl = factor / μ*
  double floor = 1e-13;
  // Samples below relative_resolution·max d sit on the solver noise plateau
  // and are treated as unresolved, both in the fit and in the coverage.
  double relative_resolution = 1e-10;
  std::size_t min_samples = 20;
};

struct EnvelopeFit {
  double C_fit = 0.0;
  double mu_fit = 0.0;
  double mu_line = 0.0;  // slope of the plain log-linear fit
  double intercept = 0.0;
  double boundary_layer = 0.0;
  std::size_t samples_used = 0;
  double resolution = 0.0;  // effective floor actually applied
  double max_relative_violation = 0.0;
};

/// max(floor, relative_resolution·max d).
inline double resolution_floor(std::span<const double> dev, const EnvelopeOptions& opts) {
  double m = 0.0;
  for (double d : dev) m = std::max(m, d);
  return std::max(opts.floor, opts.relative_resolution * m);
}

inline double envelope_shape(double mu, double t, double T) { return std::exp(-mu * t) + std::exp(-mu * (T - t)); }

namespace detail {

// Least-squares misfit of log d against log C + log(e^{−μt} + e^{−μ(T−t)})
// with log C eliminated.
inline double envelope_misfit(double mu, const Vec& t, const Vec& logd, double T, double* log_c) {
  double mean = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) mean += logd[i] - std::log(envelope_shape(mu, t[i], T));
  mean /= static_cast<double>(t.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = logd[i] - std::log(envelope_shape(mu, t[i], T)) - mean;
    ss += r * r;
  }
  if (log_c) *log_c = mean;
  return ss;
}

}  // namespace detail

/// Fits d(t) ≈ C(e^{−μt} + e^{−μ(T−t)}) on the window [t_bl, T/2]. A
/// log-linear fit gives the starting rate, which is refined on the two-sided
/// model so the right-hand layer does not bias the slope near T/2. C_fit is
/// finally inflated until the envelope covers every sample.
inline EnvelopeFit fit_envelope(std::span<const double> times, std::span<const double> dev, double T, double mu_hint,
                                const EnvelopeOptions& opts = {}) {
  if (times.size() != dev.size()) fail(ErrorKind::ShapeMismatch, "deviation samples and times differ in length");
  if (!(mu_hint > 0.0)) fail(ErrorKind::WindowEmpty, "no positive rate hint for the boundary layer");
  EnvelopeFit fit;
  fit.boundary_layer = opts.boundary_layer_factor / mu_hint;
  const double half = 0.5 * T;
  if (fit.boundary_layer >= half) fail(ErrorKind::WindowEmpty, "horizon too short for the fit window");

  fit.resolution = resolution_floor(dev, opts);
  std::size_t in_window = 0;
  Vec tw, lw;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (dev[i] < 0.0) fail(ErrorKind::ShapeMismatch, "negative deviation sample");
    if (times[i] < fit.boundary_layer || times[i] > half) continue;
    ++in_window;
    if (dev[i] < fit.resolution) continue;
    tw.push_back(times[i]);
    lw.push_back(std::log(dev[i]));
  }
  if (in_window < opts.min_samples) fail(ErrorKind::WindowEmpty, "fewer samples in the fit window than required");
  if (tw.size() < 2) fail(ErrorKind::DegenerateFit, "deviation below floor: exact turnpike");

  // plain line fit of log d against −t
  double mt = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < tw.size(); ++i) {
    mt += tw[i];
    ml += lw[i];
  }
  mt /= static_cast<double>(tw.size());
  ml /= static_cast<double>(tw.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < tw.size(); ++i) {
    sxy += (tw[i] - mt) * (lw[i] - ml);
    sxx += (tw[i] - mt) * (tw[i] - mt);
  }
  if (!(sxx > 0.0)) fail(ErrorKind::DegenerateFit, "fit window has no spread in time");
  fit.mu_line = -sxy / sxx;
  if (!(fit.mu_line > 0.0)) fail(ErrorKind::DegenerateFit, "deviation does not decay toward the middle");

  // golden-section refinement on the two-sided model
  double lo = 0.25 * fit.mu_line, hi = 4.0 * fit.mu_line;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
  double fa = detail::envelope_misfit(a, tw, lw, T, nullptr), fb = detail::envelope_misfit(b, tw, lw, T, nullptr);
  for (int it = 0; it < 200 && hi - lo > 1e-12 * fit.mu_line; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - g * (hi - lo);
      fa = detail::envelope_misfit(a, tw, lw, T, nullptr);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + g * (hi - lo);
      fb = detail::envelope_misfit(b, tw, lw, T, nullptr);
    }
  }
  fit.mu_fit = 0.5 * (lo + hi);
  double log_c = 0.0;
  detail::envelope_misfit(fit.mu_fit, tw, lw, T, &log_c);
  fit.intercept = log_c;
  fit.samples_used = tw.size();

  double c = std::exp(log_c);
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (dev[i] >= fit.resolution) c = std::max(c, dev[i] / envelope_shape(fit.mu_fit, times[i], T));
  }
  fit.C_fit = c;
  double viol = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (dev[i] >= fit.resolution) viol = std::max(viol, dev[i] / (c * envelope_shape(fit.mu_fit, times[i], T)) - 1.0);
  }
  fit.max_relative_violation = std::max(0.0, viol);
  return fit;
}

struct TurnpikeCertificate {
  Vec lambda;
  SteadyPoint steady;
  HyperbolicityReport hyperbolicity;
  TrimReference trim;
  Vec anchor;

  bool fit_available = false;
  bool exact_turnpike = false;
  std::string fit_note;
  double C_fit = 0.0;
  double mu_fit = 0.0;
  double mu_line = 0.0;
  double mu_star = 0.0;
  double boundary_layer = 0.0;
  double max_relative_violation = 0.0;
  double resolution = 0.0;
  double cyclic_C = 0.0;  // smallest C covering the y channel at mu_fit
  double cyclic_relative_violation = 0.0;
  double epsilon_data = 0.0;
  double anchor_deviation = 0.0;

  Vec times;
  Vec dev_x, dev_u, dev_y, envelope;
  double max_dev_x = 0.0, max_dev_u = 0.0, max_dev_y = 0.0;
};

inline constexpr double kExactTurnpikeTol = 1e-9;
inline constexpr double kLambdaMatchTol = 1e-8;

inline TurnpikeCertificate certify(const CyclicProblem& pb, const ExtremalSolution& sol, const SteadyPoint& sp,
                                   const HyperbolicityReport& report, const EnvelopeOptions& opts = {}) {
  if (sp.lambda.size() != sol.lambda.size() || norm_inf(sp.lambda - sol.lambda) > kLambdaMatchTol) {
    fail(ErrorKind::LambdaMismatch, "steady point was computed at a different multiplier");
  }
  TurnpikeCertificate c;
  c.lambda = sol.lambda;
  c.steady = sp;
  c.hyperbolicity = report;
  c.mu_star = report.mu_star;
  c.anchor = anchor_from_solution(sol);
  c.trim = build_trim(sp, sol.T, c.anchor, sol.times);
  c.epsilon_data = norm2(sp.xbar - pb.x0()) + norm2(sp.xbar - pb.xT());
  c.times = sol.times;

  const std::size_t N = sol.size();
  c.dev_x.resize(N);
  c.dev_u.resize(N);
  c.dev_y.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    c.dev_x[i] = norm2(sol.x[i] - sp.xbar);
    c.dev_u[i] = norm2(sol.u[i] - sp.ubar);
    c.dev_y[i] = norm2(sol.y[i] - c.trim.values[i]);
  }
  c.max_dev_x = *std::max_element(c.dev_x.begin(), c.dev_x.end());
  c.max_dev_u = *std::max_element(c.dev_u.begin(), c.dev_u.end());
  c.max_dev_y = *std::max_element(c.dev_y.begin(), c.dev_y.end());
  c.anchor_deviation = norm2(c.anchor - c.trim.value_at(0.5 * sol.T));

  Vec combined(N);
  for (std::size_t i = 0; i < N; ++i) combined[i] = c.dev_x[i] + c.dev_u[i];
  const double max_combined = *std::max_element(combined.begin(), combined.end());
  c.envelope.assign(N, 0.0);
  if (max_combined <= kExactTurnpikeTol && c.max_dev_y <= kExactTurnpikeTol) {
    c.exact_turnpike = true;
    c.fit_note = "exact turnpike";
    return c;
  }
  if (!report.hyperbolic) {
    c.fit_note = "steady point not hyperbolic";
    return c;
  }
  try {
    const EnvelopeFit fit = fit_envelope(c.times, combined, sol.T, report.mu_star, opts);
    c.fit_available = true;
    c.C_fit = fit.C_fit;
    c.mu_fit = fit.mu_fit;
    c.mu_line = fit.mu_line;
    c.boundary_layer = fit.boundary_layer;
    c.max_relative_violation = fit.max_relative_violation;
    c.resolution = fit.resolution;
    const double res_y = resolution_floor(c.dev_y, opts);
    double cy = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double shape = envelope_shape(fit.mu_fit, c.times[i], sol.T);
      c.envelope[i] = fit.C_fit * shape;
      if (c.dev_y[i] < res_y) continue;
      cy = std::max(cy, c.dev_y[i] / shape);
      vy = std::max(vy, c.dev_y[i] / c.envelope[i] - 1.0);
    }
    c.cyclic_C = cy;
    c.cyclic_relative_violation = std::max(0.0, vy);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DegenerateFit && max_combined <= kExactTurnpikeTol) {
      c.exact_turnpike = true;
      c.fit_note = "exact turnpike";
    } else if (e.kind() == ErrorKind::WindowEmpty || e.kind() == ErrorKind::DegenerateFit) {
      c.fit_note = e.what();
    } else {
      throw;
    }
  }
  return c;
}

}  // namespace trimturn
