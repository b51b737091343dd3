#pragma once

// Command-line front end: strict JSON configuration, the solve / static /
// certify / sweep pipelines and their CSV and JSON writers.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trimturn/trimturn.hpp"

namespace trimturn::cli {

using Json = nlohmann::ordered_json;

enum ExitCode { kOk = 0, kConfig = 1, kSolver = 2, kNonHyperbolic = 3 };

struct ContinuationSpec {
  double T0 = 0.0;
  double T1 = 0.0;
  int steps = 1;
};

struct RunConfig {
  std::string problem = "lq";
  std::optional<double> T;
  std::optional<Vec> x0, xT, y0, yT;
  std::optional<double> alpha, s_tilde, theta_T, theta0;
  std::optional<Vec> lambda;  // forced multiplier for static / certify

  std::size_t nodes = 8;
  double newton_tol = 1e-9;
  int max_iters = 100;
  JacobianMode jacobian = JacobianMode::Sensitivity;
  std::optional<double> max_segment_length;
  std::optional<double> abs_tol, rel_tol;
  std::optional<ContinuationSpec> continuation;
  int homotopy_steps = 20;

  std::size_t grid = 600;
  std::string out = ".";
  std::vector<double> sweep_T;
  bool parallel_cold = false;
  bool timings = false;
};

inline const std::set<std::string>& problem_names() {
  static const std::set<std::string> names{"lq", "nlq_flat", "nlq_nonflat", "kepler"};
  return names;
}

inline Dims problem_dims(const std::string& name) {
  if (name == "lq") return {1, 1, 1};
  if (name == "nlq_flat") return {1, 2, 2};
  if (name == "nlq_nonflat") return {2, 1, 2};
  return {3, 1, 2};
}

inline constexpr double kNonflatDefaultAlpha = 0.1;

// ------------------------------------------------------------ parsing ----

namespace detail {

inline void config_error(const std::string& what) { fail(ErrorKind::ConfigError, what); }

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) config_error(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!known) config_error("unknown key '" + it.key() + "' in " + where);
  }
}

inline double number(const Json& v, const std::string& key) {
  if (!v.is_number()) config_error("'" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) config_error("'" + key + "' must be finite");
  return d;
}

inline long integer(const Json& v, const std::string& key) {
  if (!v.is_number_integer()) config_error("'" + key + "' must be an integer");
  return v.get<long>();
}

// A scalar is accepted wherever a one-component vector is expected.
inline Vec vector(const Json& v, const std::string& key) {
  if (v.is_number()) return {number(v, key)};
  if (!v.is_array()) config_error("'" + key + "' must be a number or an array of numbers");
  Vec out;
  for (const auto& e : v) out.push_back(number(e, key));
  return out;
}

inline ContinuationSpec parse_continuation_text(const std::string& text) {
  ContinuationSpec c;
  char sep1 = 0, sep2 = 0;
  std::istringstream in(text);
  if (!(in >> c.T0 >> sep1 >> c.T1 >> sep2 >> c.steps) || sep1 != ':' || sep2 != ':' || !in.eof()) {
    config_error("continuation must have the form T0:T1:steps, got '" + text + "'");
  }
  return c;
}

}  // namespace detail

/// Parses a configuration document. Every key is optional; unknown keys and
/// wrongly typed values raise ConfigError.
inline RunConfig parse_config(const std::string& text, RunConfig rc = {}) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    detail::config_error(std::string("malformed JSON: ") + e.what());
  }
  detail::reject_unknown(doc, {"problem", "T", "boundary", "params", "solver", "lambda", "grid", "out", "sweep"},
                         "config");
  if (doc.contains("problem")) {
    if (!doc["problem"].is_string()) detail::config_error("'problem' must be a string");
    rc.problem = doc["problem"].get<std::string>();
  }
  if (doc.contains("T")) rc.T = detail::number(doc["T"], "T");
  if (doc.contains("boundary")) {
    const Json& b = doc["boundary"];
    detail::reject_unknown(b, {"x0", "xT", "y0", "yT"}, "boundary");
    if (b.contains("x0")) rc.x0 = detail::vector(b["x0"], "x0");
    if (b.contains("xT")) rc.xT = detail::vector(b["xT"], "xT");
    if (b.contains("y0")) rc.y0 = detail::vector(b["y0"], "y0");
    if (b.contains("yT")) rc.yT = detail::vector(b["yT"], "yT");
  }
  if (doc.contains("params")) {
    const Json& p = doc["params"];
    detail::reject_unknown(p, {"alpha", "s_tilde", "theta_T", "theta0"}, "params");
    if (p.contains("alpha")) rc.alpha = detail::number(p["alpha"], "alpha");
    if (p.contains("s_tilde")) rc.s_tilde = detail::number(p["s_tilde"], "s_tilde");
    if (p.contains("theta_T")) rc.theta_T = detail::number(p["theta_T"], "theta_T");
    if (p.contains("theta0")) rc.theta0 = detail::number(p["theta0"], "theta0");
  }
  if (doc.contains("solver")) {
    const Json& s = doc["solver"];
    detail::reject_unknown(s,
                           {"nodes", "newton_tol", "max_iters", "jacobian", "max_segment_length", "abs_tol",
                            "rel_tol", "continuation", "homotopy_steps"},
                           "solver");
    if (s.contains("nodes")) {
      const long n = detail::integer(s["nodes"], "nodes");
      if (n < 1) detail::config_error("'nodes' must be at least 1");
      rc.nodes = static_cast<std::size_t>(n);
    }
    if (s.contains("newton_tol")) rc.newton_tol = detail::number(s["newton_tol"], "newton_tol");
    if (s.contains("max_iters")) rc.max_iters = static_cast<int>(detail::integer(s["max_iters"], "max_iters"));
    if (s.contains("jacobian")) {
      const Json& j = s["jacobian"];
      if (j == "sensitivity") {
        rc.jacobian = JacobianMode::Sensitivity;
      } else if (j == "finite_difference") {
        rc.jacobian = JacobianMode::FiniteDifference;
      } else {
        detail::config_error("'jacobian' must be \"sensitivity\" or \"finite_difference\"");
      }
    }
    if (s.contains("max_segment_length"))
      rc.max_segment_length = detail::number(s["max_segment_length"], "max_segment_length");
    if (s.contains("abs_tol")) rc.abs_tol = detail::number(s["abs_tol"], "abs_tol");
    if (s.contains("rel_tol")) rc.rel_tol = detail::number(s["rel_tol"], "rel_tol");
    if (s.contains("homotopy_steps"))
      rc.homotopy_steps = static_cast<int>(detail::integer(s["homotopy_steps"], "homotopy_steps"));
    if (s.contains("continuation")) {
      const Json& c = s["continuation"];
      detail::reject_unknown(c, {"T0", "T1", "steps"}, "continuation");
      if (!c.contains("T0") || !c.contains("T1")) detail::config_error("continuation needs T0 and T1");
      ContinuationSpec cs;
      cs.T0 = detail::number(c["T0"], "T0");
      cs.T1 = detail::number(c["T1"], "T1");
      if (c.contains("steps")) cs.steps = static_cast<int>(detail::integer(c["steps"], "steps"));
      rc.continuation = cs;
    }
  }
  if (doc.contains("lambda")) rc.lambda = detail::vector(doc["lambda"], "lambda");
  if (doc.contains("grid")) {
    const long g = detail::integer(doc["grid"], "grid");
    if (g < 2) detail::config_error("'grid' must be at least 2");
    rc.grid = static_cast<std::size_t>(g);
  }
  if (doc.contains("out")) {
    if (!doc["out"].is_string()) detail::config_error("'out' must be a string");
    rc.out = doc["out"].get<std::string>();
  }
  if (doc.contains("sweep")) {
    const Json& s = doc["sweep"];
    detail::reject_unknown(s, {"T", "parallel_cold"}, "sweep");
    if (s.contains("T")) rc.sweep_T = detail::vector(s["T"], "sweep.T");
    if (s.contains("parallel_cold")) {
      if (!s["parallel_cold"].is_boolean()) detail::config_error("'parallel_cold' must be a boolean");
      rc.parallel_cold = s["parallel_cold"].get<bool>();
    }
  }
  return rc;
}

inline double default_horizon(const std::string& problem) {
  if (problem == "lq") return 20.0;
  if (problem == "kepler") return 100.0;
  return 50.0;
}

/// Horizon of the final solve.
inline double target_horizon(const RunConfig& rc) {
  if (rc.continuation) return rc.continuation->T1;
  return rc.T.value_or(default_horizon(rc.problem));
}

/// Checks the per-problem preconditions that the constructors do not.
inline void validate_config(const RunConfig& rc) {
  using detail::config_error;
  if (!problem_names().count(rc.problem)) config_error("unknown problem '" + rc.problem + "'");
  const Dims d = problem_dims(rc.problem);
  const bool kepler = rc.problem == "kepler", lq = rc.problem == "lq";
  const bool nlq = rc.problem == "nlq_flat" || rc.problem == "nlq_nonflat";

  auto check_size = [](const std::optional<Vec>& v, std::size_t n, const char* key) {
    if (v && v->size() != n) config_error(fmt::format("'{}' must have {} component(s)", key, n));
  };
  check_size(rc.x0, d.n, "x0");
  check_size(rc.xT, d.n, "xT");
  check_size(rc.y0, d.p, "y0");
  check_size(rc.yT, d.p, "yT");
  check_size(rc.lambda, d.p, "lambda");
  if (rc.lambda && !all_finite(*rc.lambda)) config_error("'lambda' must be finite");

  if (rc.alpha && !nlq) config_error("'alpha' only applies to the nlq problems");
  if (rc.problem == "nlq_flat" && rc.alpha && *rc.alpha != 0.0) config_error("nlq_flat requires alpha = 0");
  if (rc.problem == "nlq_nonflat" && rc.alpha && *rc.alpha == 0.0) config_error("nlq_nonflat requires alpha != 0");
  if ((rc.s_tilde || rc.theta_T || rc.theta0) && !kepler)
    config_error("'s_tilde', 'theta_T' and 'theta0' only apply to kepler");
  if (kepler && rc.theta_T && rc.yT) config_error("give either theta_T or yT for kepler, not both");
  if (kepler && rc.theta0 && rc.y0) config_error("give either theta0 or y0 for kepler, not both");
  if (rc.s_tilde && !(*rc.s_tilde > kRadiusFloor)) config_error("'s_tilde' must be positive");
  if (kepler) {
    for (const auto* v : {&rc.x0, &rc.xT})
      if (*v && !((**v)[0] > kRadiusFloor)) config_error("kepler boundary radius must be positive");
  }

  const double T = target_horizon(rc);
  if (rc.T && !(*rc.T > 0.0)) config_error("'T' must be positive");
  if (rc.continuation) {
    const auto& c = *rc.continuation;
    if (!(c.T0 > 0.0) || !(c.T0 <= c.T1)) config_error("continuation requires 0 < T0 <= T1");
    if (c.steps < 1) config_error("continuation steps must be at least 1");
    if (rc.T && *rc.T != c.T1) config_error("'T' conflicts with the continuation end point");
  }
  if (lq) {
    const double lowest = rc.continuation ? rc.continuation->T0 : T;
    if (!(lowest > 2.0)) config_error("lq requires T > 2");
  }
  for (double t : rc.sweep_T) {
    if (!(t > 0.0)) config_error("sweep horizons must be positive");
    if (lq && !(t > 2.0)) config_error("lq requires T > 2");
  }
  if (!(rc.newton_tol > 0.0)) config_error("'newton_tol' must be positive");
  if (rc.max_iters < 1) config_error("'max_iters' must be at least 1");
  if (rc.abs_tol && !(*rc.abs_tol > 0.0)) config_error("'abs_tol' must be positive");
  if (rc.rel_tol && !(*rc.rel_tol > 0.0)) config_error("'rel_tol' must be positive");
  if (rc.max_segment_length && !(*rc.max_segment_length >= 0.0))
    config_error("'max_segment_length' must be non-negative");
  if (rc.homotopy_steps < 1) config_error("'homotopy_steps' must be at least 1");
  if (rc.grid < 2) config_error("'grid' must be at least 2");
}

// ---------------------------------------------------------- pipelines ----

inline CyclicProblem make_problem(const RunConfig& rc, double T) {
  if (rc.problem == "lq") {
    LqParams p;
    if (rc.x0) p.x0 = (*rc.x0)[0];
    if (rc.xT) p.xT = (*rc.xT)[0];
    if (rc.y0) p.y0 = (*rc.y0)[0];
    if (rc.yT) p.yT = (*rc.yT)[0];
    p.T = T;
    return lq_problem(p);
  }
  if (rc.problem == "kepler") {
    KeplerParams p;
    if (rc.s_tilde) p.s_tilde = *rc.s_tilde;
    p.T = T;
    p.x0 = rc.x0;
    p.xT = rc.xT;
    if (rc.theta0) p.theta0 = *rc.theta0;
    if (rc.y0) p.theta0 = (*rc.y0)[0];
    // a given terminal angle belongs to the configured horizon and is scaled
    // with T along continuation, like the default πT
    std::optional<double> theta = rc.theta_T;
    if (rc.yT) theta = (*rc.yT)[0];
    if (theta) p.theta_T = *theta * T / target_horizon(rc);
    return kepler_problem(p);
  }
  NlqParams p;
  p.alpha = rc.problem == "nlq_flat" ? 0.0 : rc.alpha.value_or(kNonflatDefaultAlpha);
  p.x0 = rc.x0;
  p.xT = rc.xT;
  p.y0 = rc.y0;
  p.yT = rc.yT;
  p.T = T;
  return nlq_problem(p);
}

inline ShootingConfig shooting_config(const RunConfig& rc) {
  ShootingConfig sc;
  sc.nodes = rc.nodes;
  sc.newton_tol = rc.newton_tol;
  sc.max_iters = rc.max_iters;
  sc.jacobian_mode = rc.jacobian;
  if (rc.max_segment_length) sc.max_segment_length = *rc.max_segment_length;
  if (rc.abs_tol) sc.integrator.abs_tol = *rc.abs_tol;
  if (rc.rel_tol) sc.integrator.rel_tol = *rc.rel_tol;
  sc.output_intervals = rc.grid;
  return sc;
}

inline constexpr double kKeplerStartHorizon = 10.0;
inline constexpr double kKeplerSegment = 0.25;
inline constexpr double kNonflatStartHorizon = 2.0;

/// Problem-specific route to a converged extremal at horizon T without any
/// prior solution:
///  - lq and nlq_flat: a direct solve
///  - nlq_nonflat: continuation in T from a short horizon
///  - kepler: boundary homotopy from the circular-orbit trim at T = 10,
///    then continuation in T with the angle scaled proportionally.
inline ExtremalSolution solve_cold(const RunConfig& rc, double T, ShootingConfig sc) {
  auto family = [&rc](double t) { return make_problem(rc, t); };
  if (rc.problem == "kepler") {
    if (!rc.max_segment_length) sc.max_segment_length = kKeplerSegment;
    const double T0 = std::min(kKeplerStartHorizon, T);
    const CyclicProblem pb0 = family(T0);
    const double s_ref = rc.s_tilde.value_or(kepler_default_radius());
    const SteadyPoint sp = make_steady_point(pb0, kepler_circular_state(s_ref), Vec(3, 0.0), Vec{0.0});
    auto [start, guess] = trim_start(pb0, sp);
    ShootingConfig hc = sc;
    hc.init = std::move(guess);
    ExtremalSolution sol = boundary_homotopy(pb0, start, rc.homotopy_steps, hc);
    if (T <= T0) return sol;
    const int steps = std::max(1, static_cast<int>(std::lround((T - T0) / 9.0)));
    return continuation_in_T(family, T0, T, steps, sc, &sol).back();
  }
  if (rc.problem == "nlq_nonflat" && T > kNonflatStartHorizon) {
    const int steps = std::max(1, static_cast<int>(std::ceil((T - kNonflatStartHorizon) / 5.0)));
    return continuation_in_T(family, kNonflatStartHorizon, T, steps, sc).back();
  }
  return solve_bvp(family(T), sc);
}

/// The configured solve: solve_cold at the target horizon, or at T0 followed
/// by the requested continuation.
inline ExtremalSolution run_solve(const RunConfig& rc) {
  const ShootingConfig sc = shooting_config(rc);
  if (!rc.continuation) return solve_cold(rc, target_horizon(rc), sc);
  const auto& c = *rc.continuation;
  ExtremalSolution seed = solve_cold(rc, c.T0, sc);
  if (c.T1 == c.T0) return seed;
  auto family = [&rc](double t) { return make_problem(rc, t); };
  return continuation_in_T(family, c.T0, c.T1, c.steps, sc, &seed).back();
}

/// Steady point at the solved multiplier, started from the solution's
/// midpoint sample, which sits on the turnpike for long horizons.
inline SteadyPoint steady_for(const CyclicProblem& pb, const ExtremalSolution& sol) {
  const std::size_t mid = sol.size() / 2;
  try {
    return solve_static(pb, sol.lambda, sol.x[mid], sol.px[mid]);
  } catch (const Error&) {
    return solve_static(pb, sol.lambda);
  }
}

// ------------------------------------------------------------ writers ----

inline std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  return fmt::format("{:.17g}", v);
}

namespace detail {

inline void dump(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ",\n";
      first = false;
      out += pad + Json(it.key()).dump() + ": ";
      dump(it.value(), out, indent, depth + 1);
    }
    out += "\n" + close + "}";
  } else if (j.is_array()) {
    // arrays of scalars stay on one line
    const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_primitive(); });
    if (j.empty()) {
      out += "[]";
      return;
    }
    out += flat ? "[" : "[\n";
    bool first = true;
    for (const auto& e : j) {
      if (!first) out += flat ? ", " : ",\n";
      first = false;
      if (!flat) out += pad;
      dump(e, out, indent, depth + 1);
    }
    out += flat ? "]" : "\n" + close + "]";
  } else if (j.is_number_float()) {
    const double v = j.get<double>();
    out += std::isfinite(v) ? num(v) : "null";
  } else {
    out += j.dump();
  }
}

}  // namespace detail

/// JSON text with every floating-point value at 17 significant digits.
inline std::string to_text(const Json& j) {
  std::string out;
  detail::dump(j, out, 2, 0);
  out += "\n";
  return out;
}

inline Json vec_json(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(x);
  return a;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::ConfigError, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::ConfigError, "write failed for " + path.string());
}

inline std::string trajectory_csv(const ExtremalSolution& sol) {
  const std::size_t n = sol.x.front().size(), p = sol.y.front().size(), m = sol.u.front().size();
  std::string out = "t";
  for (std::size_t i = 1; i <= n; ++i) out += fmt::format(",x_{}", i);
  for (std::size_t i = 1; i <= p; ++i) out += fmt::format(",y_{}", i);
  for (std::size_t i = 1; i <= n; ++i) out += fmt::format(",px_{}", i);
  for (std::size_t i = 1; i <= m; ++i) out += fmt::format(",u_{}", i);
  out += "\r\n";
  for (std::size_t k = 0; k < sol.size(); ++k) {
    out += num(sol.times[k]);
    for (const auto* block : {&sol.x[k], &sol.y[k], &sol.px[k], &sol.u[k]})
      for (double v : *block) out += "," + num(v);
    out += "\r\n";
  }
  return out;
}

inline Json solution_json(const std::string& problem, const ExtremalSolution& sol, std::optional<double> seconds) {
  Json j;
  j["problem"] = problem;
  j["T"] = sol.T;
  j["lambda"] = vec_json(sol.lambda);
  j["residual_norm"] = sol.residual_norm;
  j["iterations"] = sol.iterations;
  j["nodes"] = sol.nodes;
  j["px0"] = vec_json(sol.px0);
  j["grid"] = sol.size() - 1;
  if (seconds) j["timings"] = Json{{"solve_seconds", *seconds}};
  return j;
}

inline Json spectrum_json(const Spectrum& s) {
  Json a = Json::array();
  for (auto ev : s.eigenvalues) a.push_back(Json::array({ev.real(), ev.imag()}));
  return a;
}

inline Json steady_json(const SteadyPoint& sp, const HyperbolicityReport& rep) {
  Json j;
  j["xbar"] = vec_json(sp.xbar);
  j["pxbar"] = vec_json(sp.pxbar);
  j["ubar"] = vec_json(sp.ubar);
  j["trim_velocity"] = vec_json(sp.trim_velocity);
  j["kkt_residual"] = sp.kkt_residual;
  j["eigenvalues"] = spectrum_json(rep.spectrum);
  j["hyperbolic"] = rep.hyperbolic;
  j["mu_star"] = rep.mu_star;
  return j;
}

inline Json optional_number(bool available, double v) { return available ? Json(v) : Json(nullptr); }

/// Certificate document. `cert` is absent when λ was forced and no extremal
/// was computed.
inline Json certificate_json(const std::string& problem, double T, const SteadyPoint& sp,
                             const HyperbolicityReport& rep, const TurnpikeCertificate* cert,
                             const ExtremalSolution* sol) {
  Json j;
  j["problem"] = problem;
  j["T"] = T;
  j["lambda"] = vec_json(sp.lambda);
  j["lambda_source"] = sol ? "solve" : "forced";
  j["xbar"] = vec_json(sp.xbar);
  j["pxbar"] = vec_json(sp.pxbar);
  j["ubar"] = vec_json(sp.ubar);
  j["trim_velocity"] = vec_json(sp.trim_velocity);
  j["kkt_residual"] = sp.kkt_residual;
  j["eigenvalues"] = spectrum_json(rep.spectrum);
  j["hyperbolic"] = rep.hyperbolic;
  j["hyperbolicity_threshold"] = rep.threshold;
  j["mu_star"] = rep.mu_star;
  const bool fit = cert && cert->fit_available;
  j["C_fit"] = optional_number(fit, cert ? cert->C_fit : 0.0);
  j["mu_fit"] = optional_number(fit, cert ? cert->mu_fit : 0.0);
  j["mu_line"] = optional_number(fit, cert ? cert->mu_line : 0.0);
  j["boundary_layer"] = optional_number(fit, cert ? cert->boundary_layer : 0.0);
  j["max_relative_violation"] = optional_number(fit, cert ? cert->max_relative_violation : 0.0);
  j["cyclic_C"] = optional_number(fit, cert ? cert->cyclic_C : 0.0);
  j["cyclic_relative_violation"] = optional_number(fit, cert ? cert->cyclic_relative_violation : 0.0);
  j["resolution_floor"] = optional_number(fit, cert ? cert->resolution : 0.0);
  j["anchor"] = cert ? vec_json(cert->anchor) : Json(nullptr);
  j["anchor_deviation"] = optional_number(cert != nullptr, cert ? cert->anchor_deviation : 0.0);
  j["epsilon_data"] = optional_number(cert != nullptr, cert ? cert->epsilon_data : 0.0);
  j["max_dev_x"] = optional_number(cert != nullptr, cert ? cert->max_dev_x : 0.0);
  j["max_dev_u"] = optional_number(cert != nullptr, cert ? cert->max_dev_u : 0.0);
  j["max_dev_y"] = optional_number(cert != nullptr, cert ? cert->max_dev_y : 0.0);
  j["exact_turnpike"] = cert ? cert->exact_turnpike : false;
  j["fit_available"] = fit;
  j["fit_note"] = cert ? cert->fit_note : std::string("multiplier forced; no extremal computed");
  j["residual_norm"] = optional_number(sol != nullptr, sol ? sol->residual_norm : 0.0);
  return j;
}

inline std::string deviation_csv(const TurnpikeCertificate& c) {
  std::string out = "t,dev_x,dev_u,dev_y,envelope\r\n";
  for (std::size_t i = 0; i < c.times.size(); ++i) {
    out += num(c.times[i]) + "," + num(c.dev_x[i]) + "," + num(c.dev_u[i]) + "," + num(c.dev_y[i]) + ",";
    if (c.fit_available) out += num(c.envelope[i]);
    out += "\r\n";
  }
  return out;
}

// ---------------------------------------------------------- commands ----

struct CommandResult {
  int code = kOk;
  std::vector<std::string> files;
};

inline std::filesystem::path prepare_out(const RunConfig& rc) {
  std::filesystem::path dir(rc.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::ConfigError, "cannot create output directory " + dir.string());
  return dir;
}

struct Timed {
  ExtremalSolution sol;
  double seconds = 0.0;
};

inline Timed timed_solve(const RunConfig& rc) {
  const auto t0 = std::chrono::steady_clock::now();
  Timed t{run_solve(rc)};
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

inline void write_solution(const RunConfig& rc, const std::filesystem::path& dir, const Timed& t,
                           CommandResult& res) {
  write_file(dir / "trajectory.csv", trajectory_csv(t.sol));
  write_file(dir / "solution.json",
             to_text(solution_json(rc.problem, t.sol, rc.timings ? std::optional(t.seconds) : std::nullopt)));
  res.files.push_back("trajectory.csv");
  res.files.push_back("solution.json");
}

inline CommandResult cmd_solve(const RunConfig& rc) {
  if (rc.lambda) fail(ErrorKind::ConfigError, "a forced multiplier only applies to static and certify");
  CommandResult res;
  const auto dir = prepare_out(rc);
  write_solution(rc, dir, timed_solve(rc), res);
  return res;
}

/// Seeds for branch enumeration: the boundary midpoint, both endpoints and
/// the origin.
inline std::vector<Vec> static_seeds(const CyclicProblem& pb) {
  std::vector<Vec> seeds{0.5 * (pb.x0() + pb.xT()), pb.x0(), pb.xT(), Vec(pb.dims().n, 0.0)};
  return seeds;
}

inline CommandResult cmd_static(const RunConfig& rc) {
  CommandResult res;
  const auto dir = prepare_out(rc);
  const double T = target_horizon(rc);
  const CyclicProblem pb = make_problem(rc, T);
  Vec lambda;
  std::vector<Vec> seeds = static_seeds(pb);
  if (rc.lambda) {
    lambda = *rc.lambda;
  } else {
    const Timed t = timed_solve(rc);
    lambda = t.sol.lambda;
    seeds.insert(seeds.begin(), t.sol.x[t.sol.size() / 2]);
  }
  const StaticBranches br = enumerate_static_branches(pb, lambda, seeds);
  Json j;
  j["problem"] = rc.problem;
  j["T"] = T;
  j["lambda"] = vec_json(lambda);
  j["lambda_source"] = rc.lambda ? "forced" : "solve";
  Json list = Json::array();
  for (const auto& b : br.branches) list.push_back(steady_json(b.point, b.report));
  j["branches"] = list;
  Json failures = Json::array();
  for (const auto& f : br.failures)
    failures.push_back(Json{{"seed", vec_json(f.seed)}, {"error", std::string(to_string(f.kind))}});
  j["failed_seeds"] = failures;
  write_file(dir / "static.json", to_text(j));
  res.files.push_back("static.json");
  if (br.branches.empty()) fail(ErrorKind::NewtonStagnation, "no static branch found from any seed");
  return res;
}

inline CommandResult cmd_certify(const RunConfig& rc) {
  CommandResult res;
  const auto dir = prepare_out(rc);
  const double T = target_horizon(rc);
  const CyclicProblem pb = make_problem(rc, T);
  if (rc.lambda) {
    // several equilibria may exist at a forced multiplier; a hyperbolic one
    // is preferred since only such a point can act as a turnpike
    const StaticBranches br = enumerate_static_branches(pb, *rc.lambda, static_seeds(pb));
    if (br.branches.empty()) fail(ErrorKind::NewtonStagnation, "no static branch found from any seed");
    const auto pick = std::find_if(br.branches.begin(), br.branches.end(),
                                   [](const StaticBranch& b) { return b.report.hyperbolic; });
    const StaticBranch& chosen = pick != br.branches.end() ? *pick : br.branches.front();
    const SteadyPoint& sp = chosen.point;
    const HyperbolicityReport& rep = chosen.report;
    write_file(dir / "certificate.json", to_text(certificate_json(rc.problem, T, sp, rep, nullptr, nullptr)));
    res.files.push_back("certificate.json");
    res.code = rep.hyperbolic ? kOk : kNonHyperbolic;
    return res;
  }
  const Timed t = timed_solve(rc);
  write_solution(rc, dir, t, res);
  const SteadyPoint sp = steady_for(pb, t.sol);
  const HyperbolicityReport rep = check_hyperbolicity(pb, sp);
  const TurnpikeCertificate cert = certify(pb, t.sol, sp, rep);
  write_file(dir / "certificate.json", to_text(certificate_json(rc.problem, T, sp, rep, &cert, &t.sol)));
  write_file(dir / "deviation.csv", deviation_csv(cert));
  res.files.push_back("certificate.json");
  res.files.push_back("deviation.csv");
  res.code = rep.hyperbolic ? kOk : kNonHyperbolic;
  return res;
}

struct SweepRow {
  double T = 0.0;
  std::string status = "ok";
  std::string message;
  Vec lambda, xbar;
  std::optional<double> mu_fit, C_fit;
};

inline SweepRow sweep_row(const RunConfig& rc, const ExtremalSolution& sol) {
  SweepRow row;
  row.T = sol.T;
  row.lambda = sol.lambda;
  const CyclicProblem pb = make_problem(rc, sol.T);
  const SteadyPoint sp = steady_for(pb, sol);
  row.xbar = sp.xbar;
  const HyperbolicityReport rep = check_hyperbolicity(pb, sp);
  const TurnpikeCertificate cert = certify(pb, sol, sp, rep);
  if (cert.fit_available) {
    row.mu_fit = cert.mu_fit;
    row.C_fit = cert.C_fit;
  }
  return row;
}

inline SweepRow failed_row(double T, const Error& e) {
  SweepRow row;
  row.T = T;
  row.status = std::string(to_string(e.kind()));
  row.message = e.what();
  return row;
}

inline std::vector<SweepRow> run_sweep(const RunConfig& rc) {
  const auto& Ts = rc.sweep_T;
  if (Ts.size() < 2) fail(ErrorKind::ConfigError, "a sweep needs at least two horizons");
  for (std::size_t i = 1; i < Ts.size(); ++i)
    if (!(Ts[i] > Ts[i - 1])) fail(ErrorKind::ConfigError, "sweep horizons must be strictly increasing");
  const ShootingConfig sc = shooting_config(rc);
  std::vector<SweepRow> rows;
  if (rc.parallel_cold) {
    std::vector<std::future<SweepRow>> jobs;
    for (double T : Ts) {
      jobs.push_back(std::async(std::launch::async, [&rc, &sc, T] {
        try {
          return sweep_row(rc, solve_cold(rc, T, sc));
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::ConfigError) throw;
          return failed_row(T, e);
        }
      }));
    }
    for (auto& j : jobs) rows.push_back(j.get());
    return rows;
  }
  auto family = [&rc](double t) { return make_problem(rc, t); };
  std::optional<ExtremalSolution> prev;
  for (double T : Ts) {
    try {
      ExtremalSolution sol = prev ? continuation_in_T(family, prev->T, T, 1, sc, &*prev).back() : solve_cold(rc, T, sc);
      rows.push_back(sweep_row(rc, sol));
      prev = std::move(sol);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      rows.push_back(failed_row(T, e));
    }
  }
  return rows;
}

inline std::string sweep_csv(const RunConfig& rc, const std::vector<SweepRow>& rows) {
  const Dims d = problem_dims(rc.problem);
  std::string out = "T,status";
  for (std::size_t i = 1; i <= d.p; ++i) out += fmt::format(",lambda_{}", i);
  for (std::size_t i = 1; i <= d.n; ++i) out += fmt::format(",xbar_{}", i);
  out += ",mu_fit,C_fit,message\r\n";
  for (const auto& r : rows) {
    out += num(r.T) + "," + r.status;
    for (std::size_t i = 0; i < d.p; ++i) out += "," + (i < r.lambda.size() ? num(r.lambda[i]) : std::string());
    for (std::size_t i = 0; i < d.n; ++i) out += "," + (i < r.xbar.size() ? num(r.xbar[i]) : std::string());
    out += "," + (r.mu_fit ? num(*r.mu_fit) : std::string());
    out += "," + (r.C_fit ? num(*r.C_fit) : std::string());
    out += "," + csv_field(r.message) + "\r\n";
  }
  return out;
}

inline CommandResult cmd_sweep(const RunConfig& rc) {
  if (rc.lambda) fail(ErrorKind::ConfigError, "a forced multiplier only applies to static and certify");
  CommandResult res;
  const auto rows = run_sweep(rc);
  const auto dir = prepare_out(rc);
  write_file(dir / "sweep.csv", sweep_csv(rc, rows));
  res.files.push_back("sweep.csv");
  const bool any_ok = std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.status == "ok"; });
  res.code = any_ok ? kOk : kSolver;
  return res;
}

// --------------------------------------------------------------- main ----

inline int exit_code_for(ErrorKind kind) { return kind == ErrorKind::ConfigError ? kConfig : kSolver; }

/// Parses arguments (program name first), runs one command and returns the
/// process exit code. Diagnostics go to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& err = std::cerr) {
  CLI::App app{"Trim turnpike solver for optimal control problems with cyclic variables"};
  app.require_subcommand(1);
  std::string problem, config_path, out, continuation;
  std::optional<double> T, alpha, s_tilde, theta_T, tol;
  std::optional<std::size_t> grid, nodes;
  std::optional<int> homotopy_steps;
  std::vector<double> x0, xT, y0, yT, lambda, t_list;
  bool parallel_cold = false, timings = false;

  app.add_option("--problem", problem, "lq, nlq_flat, nlq_nonflat or kepler");
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--T", T, "horizon");
  app.add_option("--out", out, "output directory");
  app.add_option("--grid", grid, "output grid intervals");
  app.add_option("--x0", x0, "initial shape state, comma separated")->delimiter(',');
  app.add_option("--xT", xT, "terminal shape state, comma separated")->delimiter(',');
  app.add_option("--y0", y0, "initial cyclic state, comma separated")->delimiter(',');
  app.add_option("--yT", yT, "terminal cyclic state, comma separated")->delimiter(',');
  app.add_option("--alpha", alpha, "non-flat coupling of the nlq problem");
  app.add_option("--s-tilde", s_tilde, "reference radius of the kepler problem");
  app.add_option("--theta-T", theta_T, "terminal angle of the kepler problem");
  app.add_option("--nodes", nodes, "shooting segments");
  app.add_option("--tol", tol, "Newton residual tolerance");
  app.add_option("--continuation", continuation, "continuation in T as T0:T1:steps");
  app.add_option("--homotopy-steps", homotopy_steps, "boundary homotopy stages for kepler");
  app.add_option("--lambda", lambda, "forced multiplier for static/certify, comma separated")->delimiter(',');
  app.add_option("--T-list", t_list, "sweep horizons, comma separated")->delimiter(',');
  app.add_flag("--parallel-cold", parallel_cold, "sweep horizons as independent cold starts");
  app.add_flag("--timings", timings, "record wall-clock timings in solution.json");

  auto* solve = app.add_subcommand("solve", "solve the boundary value problem")->fallthrough();
  auto* stat = app.add_subcommand("static", "static branches at the multiplier")->fallthrough();
  auto* cert = app.add_subcommand("certify", "solve and certify the trim turnpike")->fallthrough();
  auto* sweep = app.add_subcommand("sweep", "continuation across a list of horizons")->fallthrough();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    err << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: ConfigError: " << e.what() << "\n";
    return kConfig;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) fail(ErrorKind::ConfigError, "cannot read config " + config_path);
      std::stringstream buf;
      buf << f.rdbuf();
      rc = parse_config(buf.str());
    }
    if (!problem.empty()) rc.problem = problem;
    if (T) rc.T = *T;
    if (!out.empty()) rc.out = out;
    if (grid) rc.grid = *grid;
    if (!x0.empty()) rc.x0 = x0;
    if (!xT.empty()) rc.xT = xT;
    if (!y0.empty()) rc.y0 = y0;
    if (!yT.empty()) rc.yT = yT;
    if (alpha) rc.alpha = *alpha;
    if (s_tilde) rc.s_tilde = *s_tilde;
    if (theta_T) rc.theta_T = *theta_T;
    if (nodes) rc.nodes = *nodes;
    if (tol) rc.newton_tol = *tol;
    if (!continuation.empty()) rc.continuation = detail::parse_continuation_text(continuation);
    if (homotopy_steps) rc.homotopy_steps = *homotopy_steps;
    if (!lambda.empty()) rc.lambda = lambda;
    if (!t_list.empty()) rc.sweep_T = t_list;
    if (parallel_cold) rc.parallel_cold = true;
    if (timings) rc.timings = true;
    if (rc.nodes < 1) fail(ErrorKind::ConfigError, "'nodes' must be at least 1");
    validate_config(rc);

    CommandResult res;
    if (*solve) res = cmd_solve(rc);
    if (*stat) res = cmd_static(rc);
    if (*cert) res = cmd_certify(rc);
    if (*sweep) res = cmd_sweep(rc);
    if (res.code == kNonHyperbolic) err << "steady point is not hyperbolic\n";
    return res.code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  }
}

}  // namespace trimturn::cli
