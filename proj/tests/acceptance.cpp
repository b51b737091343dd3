// Acceptance suite: one PASS/FAIL line per criterion. The process exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "trimturn/trimturn.hpp"

using namespace trimturn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, bool ok, const std::string& detail) {
  std::printf("criterion %2d %-34s %s  %s\n", id, title, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

struct Solved {
  std::string name;
  CyclicProblem problem;
  ExtremalSolution sol;
  double seconds = 0.0;
};

// ---------------------------------------------------------------- solves

Solved solve_lq(double T) {
  LqParams prm;
  prm.T = T;
  const auto t0 = Clock::now();
  CyclicProblem pb = lq_problem(prm);
  ExtremalSolution sol = solve_bvp(pb);
  return {"lq T=" + std::to_string(static_cast<int>(T)), pb, sol, seconds_since(t0)};
}

Solved solve_flat() {
  const auto t0 = Clock::now();
  CyclicProblem pb = nlq_problem({});
  ExtremalSolution sol = solve_bvp(pb);
  return {"nlq_flat", pb, sol, seconds_since(t0)};
}

// Non-flat data: continuation in T from a short horizon.
Solved solve_nonflat() {
  const auto t0 = Clock::now();
  NlqParams prm;
  prm.alpha = 0.1;
  auto family = [&](double T) {
    NlqParams q = prm;
    q.T = T;
    return nlq_problem(q);
  };
  ExtremalSolution sol = continuation_in_T(family, 2.0, 50.0, 10).back();
  return {"nlq_nonflat", family(50.0), sol, seconds_since(t0)};
}

// Homotopy from the circular-orbit trim at T = 10, then continuation to
// T = 100 in 10 steps with the terminal angle scaled as πT.
Solved solve_kepler() {
  const auto t0 = Clock::now();
  auto family = [](double T) {
    KeplerParams q;
    q.T = T;
    return kepler_problem(q);
  };
  ShootingConfig cfg;
  cfg.max_segment_length = 0.25;
  const CyclicProblem pb10 = family(10.0);
  const SteadyPoint ref =
      make_steady_point(pb10, kepler_circular_state(kepler_default_radius()), Vec(3, 0.0), Vec{0.0});
  auto [start, guess] = trim_start(pb10, ref);
  ShootingConfig hc = cfg;
  hc.init = guess;
  ExtremalSolution s10 = boundary_homotopy(pb10, start, 20, hc);
  ExtremalSolution sol = continuation_in_T(family, 10.0, 100.0, 10, cfg, &s10).back();
  return {"kepler", family(100.0), sol, seconds_since(t0)};
}

struct Certified {
  SteadyPoint sp;
  HyperbolicityReport rep;
  TurnpikeCertificate cert;
};

Certified certify_solved(const Solved& s) {
  const std::size_t mid = s.sol.size() / 2;
  SteadyPoint sp = solve_static(s.problem, s.sol.lambda, s.sol.x[mid], s.sol.px[mid]);
  HyperbolicityReport rep = check_hyperbolicity(s.problem, sp);
  TurnpikeCertificate cert = certify(s.problem, s.sol, sp, rep);
  return {sp, rep, cert};
}

// ------------------------------------------------------------- criteria

void criterion1() {
  const auto t0 = Clock::now();
  LqParams prm;  // T=20, x0=1, xT=2, y0=0, yT=3
  const CyclicProblem pb = lq_problem(prm);
  ShootingConfig cfg;
  cfg.output_intervals = 600;
  const ExtremalSolution sol = solve_bvp(pb, cfg);
  const double dt = seconds_since(t0);
  const LqClosedForm ex = lq_exact(prm);
  double err_x = 0.0;
  for (std::size_t i = 0; i < sol.size(); ++i) err_x = std::max(err_x, std::abs(sol.x[i][0] - ex.x(sol.times[i])));
  const double err_l = std::abs(sol.lambda[0] - ex.lambda);
  const bool ok = err_x <= 1e-6 && err_l <= 1e-6 && dt <= 1.0 && sol.size() == 601;
  report(1, "LQ oracle equivalence", ok,
         fmt("sup|x-x_exact|=%.3e", err_x) + fmt(" |dlambda|=%.3e", err_l) + fmt(" time=%.3fs", dt));
}

void criterion2() {
  bool ok = true;
  std::string detail;
  for (double yT : {3.0, 5.0}) {
    const double d20 = std::abs(lq_exact(1.0, 2.0, 0.0, yT, 20.0).lambda - lq_lambda_approx(1.0, 2.0, 0.0, yT, 20.0));
    const double d30 = std::abs(lq_exact(1.0, 2.0, 0.0, yT, 30.0).lambda - lq_lambda_approx(1.0, 2.0, 0.0, yT, 30.0));
    ok = ok && d20 <= 1e-5 && d30 * 100.0 <= d20;
    detail += fmt("yT=%g:", yT) + fmt(" d20=%.3e", d20) + fmt(" d30=%.3e ", d30);
  }
  report(2, "lambda-formula consistency", ok, detail);
}

void criterion3() {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> lam(-5.0, 5.0), unit(-1.0, 1.0);
  const CyclicProblem lq = lq_problem({});
  double err_lq = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double l = lam(rng);
    const SteadyPoint sp = solve_static(lq, Vec{l});
    err_lq = std::max({err_lq, std::abs(sp.xbar[0] + 0.5 * l), std::abs(sp.ubar[0])});
  }
  NlqParams np;
  np.alpha = 0.1;
  const CyclicProblem nf = nlq_problem(np);
  double err_nf = 0.0;
  for (int k = 0; k < 10; ++k) {
    Vec x{unit(rng), unit(rng)};
    const double r = norm2(x);
    if (r > 1.0) x = (1.0 / r) * x;
    const double l = unit(rng);
    const SteadyPoint sp = solve_static(nf, Vec{l}, x);
    err_nf = std::max({err_nf, norm_inf(sp.xbar), norm_inf(sp.pxbar)});
  }
  report(3, "static optimizer formulas", err_lq <= 1e-10 && err_nf <= 1e-9,
         fmt("lq max err=%.3e", err_lq) + fmt(" nonflat max err=%.3e", err_nf));
}

// Literal statement: origin hyperbolic iff 2λ₁λ₂−1 > 0 with gap
// √(2λ₁λ₂−1); nonzero branches non-hyperbolic.
void criterion4() {
  const CyclicProblem pb = nlq_problem({});
  int mismatched = 0, gap_errors = 0, bad_branches = 0, first_l1 = 99, first_l2 = 99;
  std::vector<Vec> seeds{{-2.0}, {-1.0}, {0.0}, {1.0}, {2.0}};
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      const double l1 = i, l2 = j, c = 2.0 * l1 * l2 - 1.0;
      const Vec lambda{l1, l2};
      const SteadyPoint origin = solve_static(pb, lambda, Vec{0.0});
      const HyperbolicityReport rep = check_hyperbolicity(pb, origin);
      const bool expect = c > 0.0;
      if (rep.hyperbolic != expect) {
        if (mismatched == 0) {
          first_l1 = i;
          first_l2 = j;
        }
        ++mismatched;
      }
      if (expect && std::abs(rep.mu_star - std::sqrt(c)) > 1e-6) ++gap_errors;
      {
        const StaticBranches br = enumerate_static_branches(pb, lambda, seeds);
        for (const auto& b : br.branches)
          if (std::abs(b.point.xbar[0]) > 1e-6 && b.report.hyperbolic) ++bad_branches;
      }
    }
  }
  const bool ok = mismatched == 0 && gap_errors == 0 && bad_branches == 0;
  std::string detail = "mismatched classifications=" + std::to_string(mismatched) + "/25" +
                       " gap errors=" + std::to_string(gap_errors) +
                       " hyperbolic nonzero branches=" + std::to_string(bad_branches);
  if (mismatched)
    detail += " first at lambda=(" + std::to_string(first_l1) + "," + std::to_string(first_l2) + ")";
  report(4, "hyperbolicity classification", ok, detail);

  // Diagnostic only: the classification the linearization actually gives
  // (origin hyperbolic iff 1 − 2λ₁λ₂ > 0, gap √(1 − 2λ₁λ₂)).
  int diag = 0;
  for (int i = -2; i <= 2; ++i) {
    for (int j = -2; j <= 2; ++j) {
      const double c = 1.0 - 2.0 * i * j;
      const SteadyPoint origin = solve_static(pb, Vec{double(i), double(j)}, Vec{0.0});
      const HyperbolicityReport rep = check_hyperbolicity(pb, origin);
      if (rep.hyperbolic != (c > 0.0) || (c > 0.0 && std::abs(rep.mu_star - std::sqrt(c)) > 1e-6)) ++diag;
    }
  }
  std::printf("             note: classification against 1-2*l1*l2 > 0 disagrees at %d/25 grid points\n", diag);
}

void criterion5(const std::vector<const Solved*>& all, const std::vector<const Certified*>& certs) {
  double worst = 0.0;
  std::string detail;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const ExtremalSolution& sol = all[k]->sol;
    const std::size_t mid = sol.size() / 2;
    const bool on_grid = std::abs(sol.times[mid] - 0.5 * sol.T) <= 1e-12 * sol.T;
    const Vec y_half = on_grid ? sol.y[mid] : anchor_from_solution(sol);
    const double d = norm2(y_half - certs[k]->cert.trim.value_at(0.5 * sol.T));
    worst = std::max(worst, d);
    detail += all[k]->name + fmt("=%.1e ", d);
  }
  report(5, "midpoint anchoring", worst <= 1e-10, detail);
}

void criterion6() {
  const auto t0 = Clock::now();
  std::vector<double> mu, C;
  std::string detail;
  for (double T : {20.0, 40.0, 80.0}) {
    const Solved s = solve_lq(T);
    const Certified c = certify_solved(s);
    mu.push_back(c.cert.fit_available ? c.cert.mu_fit : 0.0);
    C.push_back(c.cert.fit_available ? c.cert.C_fit : 0.0);
    detail += fmt("T=%g:", T) + fmt(" mu=%.4f", mu.back()) + fmt(" C=%.3f ", C.back());
  }
  const double dt = seconds_since(t0);
  bool ok = dt <= 5.0;
  for (double m : mu) ok = ok && std::abs(m - 1.0) <= 0.1;
  const double cmin = *std::min_element(C.begin(), C.end()), cmax = *std::max_element(C.begin(), C.end());
  ok = ok && cmin > 0.0 && cmax <= 2.0 * cmin;
  report(6, "envelope rate", ok, detail + fmt("time=%.2fs", dt));
}

void criterion7(const Solved& s, const Certified& c) {
  const ExtremalSolution& sol = s.sol;
  const std::size_t N = sol.size() - 1, mid = N / 2;
  const double ratio = (c.cert.dev_x[0] + c.cert.dev_u[0]) / std::max(c.cert.dev_x[mid] + c.cert.dev_u[mid], 1e-300);
  bool decay = true;
  for (std::size_t comp = 0; comp < 2; ++comp) {
    std::vector<double> d(sol.size());
    double top = 0.0;
    for (std::size_t i = 0; i <= N; ++i) {
      d[i] = std::abs(sol.y[i][comp] - c.cert.trim.values[i][comp]);
      top = std::max(top, d[i]);
    }
    const double floor = 1e-10 * top;
    // the middle value sits far below both ends
    decay = decay && d[mid] <= 1e-3 * std::min(d[0], d[N]);
    // coarse samples decrease from each end until they hit the noise level
    for (std::size_t q = 0; q + 1 < 5; ++q) {
      const std::size_t a = q * N / 10, b = (q + 1) * N / 10;
      if (d[b] > floor) decay = decay && d[b] < d[a];
      const std::size_t ra = N - a, rb = N - b;
      if (d[rb] > floor) decay = decay && d[rb] < d[ra];
    }
  }
  const bool ok = ratio >= 1e3 && decay && s.seconds <= 10.0;
  report(7, "flat NLQ turnpike shape", ok,
         fmt("combined ratio t=0 vs T/2 = %.3e", ratio) + (decay ? " cyclic decay ok" : " cyclic decay violated") +
             fmt(" time=%.2fs", s.seconds));
}

void criterion8(const Solved& s, const Certified& c) {
  const std::size_t mid = s.sol.size() / 2;
  const double dev_mid = norm2(s.sol.x[mid] - c.sp.xbar);
  const double anchor = norm2(s.sol.y[mid] - c.cert.trim.value_at(0.5 * s.sol.T));
  const bool ok = s.sol.residual_norm <= 1e-8 && dev_mid <= 1e-2 && anchor <= 1e-10 && s.seconds <= 60.0;
  report(8, "Kepler solve", ok,
         fmt("residual=%.3e", s.sol.residual_norm) + fmt(" |x-xbar|(T/2)=%.3e", dev_mid) +
             fmt(" anchor=%.1e", anchor) + fmt(" lambda=%.8f", s.sol.lambda[0]) + fmt(" time=%.1fs", s.seconds));
}

double pairing_error(const Matrix& m) {
  const Spectrum s = eigenvalues(m);
  double worst = 0.0;
  for (auto a : s.eigenvalues) {
    double best = 1e300;
    for (auto b : s.eigenvalues) best = std::min(best, std::abs(a + b));
    worst = std::max(worst, best / std::max(1.0, std::abs(a)));
  }
  return worst;
}

void criterion9(const std::vector<const Solved*>& all, const std::vector<const Certified*>& certs) {
  double h_worst = 0.0, py_worst = 0.0, pair_worst = 0.0;
  std::string detail;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const CyclicProblem& pb = all[k]->problem;
    const ExtremalSolution& sol = all[k]->sol;
    const std::size_t n = pb.dims().n, p = pb.dims().p;
    const double h0 = feedback_hamiltonian(pb, sol.x[0], sol.px[0], sol.lambda);
    double drift = 0.0;
    for (std::size_t i = 0; i < sol.size(); ++i)
      drift = std::max(drift, std::abs(feedback_hamiltonian(pb, sol.x[i], sol.px[i], sol.lambda) - h0));
    const double h_rel = drift / std::max(1.0, std::abs(h0));
    h_worst = std::max(h_worst, h_rel);

    // augmented system (x, y, p_x, p_y) with ṗ_y = −∂H/∂y by central
    // differences in y, integrated segment by segment
    const std::size_t d = 2 * n + p;
    auto h_full = [&](std::span<const double> w) {
      const Vec x(w.begin(), w.begin() + n), px(w.begin() + n + p, w.begin() + d), py(w.begin() + d, w.end());
      return feedback_hamiltonian(pb, x, px, py);
    };
    auto rhs = [&](std::span<const double> w) {
      const Vec z(w.begin(), w.begin() + d);
      const Vec py(w.begin() + d, w.end());
      Vec out = fbvp_rhs(pb, z, py);
      for (std::size_t j = 0; j < p; ++j) {
        Vec wp(w.begin(), w.end()), wm(w.begin(), w.end());
        const double h = 1e-6 * std::max(1.0, std::abs(w[n + j]));
        wp[n + j] += h;
        wm[n + j] -= h;
        out.push_back(-(h_full(wp) - h_full(wm)) / (2.0 * h));
      }
      return out;
    };
    double py_drift = 0.0;
    for (std::size_t seg = 0; seg + 1 < sol.node_times.size(); ++seg) {
      Vec w = concat({sol.node_states[seg], sol.lambda});
      IntegratorOptions io;
      io.abs_tol = 1e-12;
      io.rel_tol = 1e-11;
      const Trajectory tr = integrate(rhs, w, sol.node_times[seg], sol.node_times[seg + 1], io, 4);
      for (const auto& st : tr.states)
        for (std::size_t j = 0; j < p; ++j) py_drift = std::max(py_drift, std::abs(st[d + j] - sol.lambda[j]));
    }
    py_worst = std::max(py_worst, py_drift);

    double pair = pairing_error(certs[k]->rep.matrix);
    for (std::size_t i = 0; i < sol.size(); i += std::max<std::size_t>(1, sol.size() / 20))
      pair = std::max(pair, pairing_error(linearize_reduced(pb, ReducedState{sol.x[i], sol.px[i]}, sol.lambda)));
    pair_worst = std::max(pair_worst, pair);
    detail += all[k]->name + fmt(": dH=%.1e", h_rel) + fmt(" dpy=%.1e", py_drift) + fmt(" pair=%.1e  ", pair);
  }
  report(9, "conservation suite", h_worst <= 1e-6 && py_worst <= 1e-12 && pair_worst <= 1e-8, detail);
}

// rbvp_rhs against (∇_{p_x} H^λ, −∇_x H^λ) with u held at u*.
void criterion10() {
  std::mt19937 rng(10);
  std::uniform_real_distribution<double> box(-5.0, 5.0), unit(-1.0, 1.0), radius(0.5, 5.0);
  NlqParams nf;
  nf.alpha = 0.1;
  struct Case {
    std::string name;
    CyclicProblem pb;
    std::function<void(Vec&, Vec&, Vec&)> draw;
  };
  std::vector<Case> cases;
  auto boxed = [&](Vec& x, Vec& px, Vec& l) {
    for (double& v : x) v = box(rng);
    for (double& v : px) v = box(rng);
    for (double& v : l) v = box(rng);
  };
  cases.push_back({"lq", lq_problem({}), boxed});
  cases.push_back({"nlq_flat", nlq_problem({}), boxed});
  cases.push_back({"nlq_nonflat", nlq_problem(nf), boxed});
  cases.push_back({"kepler", kepler_problem({}), [&](Vec& x, Vec& px, Vec& l) {
                     x = {radius(rng), unit(rng), unit(rng)};
                     for (double& v : px) v = unit(rng);
                     l = {unit(rng)};
                   }});
  double worst = 0.0;
  std::string detail;
  for (auto& c : cases) {
    const std::size_t n = c.pb.dims().n, p = c.pb.dims().p;
    double case_worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      Vec x(n), px(n), l(p);
      c.draw(x, px, l);
      const Vec u = optimal_feedback(c.pb, x, px, l);
      const ReducedState f = rbvp_rhs(c.pb, ReducedState{x, px}, l);
      for (std::size_t i = 0; i < n; ++i) {
        const double hx = 1e-6 * std::max(1.0, std::abs(x[i])), hp = 1e-6 * std::max(1.0, std::abs(px[i]));
        Vec xp = x, xm = x, pp = px, pm = px;
        xp[i] += hx;
        xm[i] -= hx;
        pp[i] += hp;
        pm[i] -= hp;
        const double dHdp =
            (rocp_hamiltonian(c.pb, x, pp, l, u) - rocp_hamiltonian(c.pb, x, pm, l, u)) / (2.0 * hp);
        const double dHdx =
            (rocp_hamiltonian(c.pb, xp, px, l, u) - rocp_hamiltonian(c.pb, xm, px, l, u)) / (2.0 * hx);
        case_worst = std::max(case_worst, std::abs(f.x[i] - dHdp) / std::max(1.0, std::abs(dHdp)));
        case_worst = std::max(case_worst, std::abs(f.px[i] + dHdx) / std::max(1.0, std::abs(dHdx)));
      }
    }
    worst = std::max(worst, case_worst);
    detail += c.name + fmt("=%.1e ", case_worst);
  }
  report(10, "equivalence suite", worst <= 1e-5, detail);
}

}  // namespace

int main() {
  auto guarded = [](int id, const char* title, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(id, title, false, std::string("exception: ") + e.what());
    }
  };
  guarded(1, "LQ oracle equivalence", criterion1);
  guarded(2, "lambda-formula consistency", criterion2);
  guarded(3, "static optimizer formulas", criterion3);
  guarded(4, "hyperbolicity classification", criterion4);

  // solves shared by the remaining criteria
  std::vector<Solved> solved;
  std::vector<std::string> solve_errors;
  auto attempt = [&](const std::function<Solved()>& f, const char* name) {
    try {
      solved.push_back(f());
    } catch (const std::exception& e) {
      solve_errors.push_back(std::string(name) + ": " + e.what());
    }
  };
  attempt([] { return solve_lq(20.0); }, "lq");
  attempt(solve_flat, "nlq_flat");
  attempt(solve_nonflat, "nlq_nonflat");
  attempt(solve_kepler, "kepler");
  std::vector<Certified> certified;
  for (const auto& s : solved) certified.push_back(certify_solved(s));
  std::vector<const Solved*> all;
  std::vector<const Certified*> certs;
  for (std::size_t k = 0; k < solved.size(); ++k) {
    all.push_back(&solved[k]);
    certs.push_back(&certified[k]);
  }
  auto find = [&](const std::string& name) -> int {
    for (std::size_t k = 0; k < solved.size(); ++k)
      if (solved[k].name == name) return static_cast<int>(k);
    return -1;
  };
  for (const auto& e : solve_errors) std::printf("             solve failed: %s\n", e.c_str());

  guarded(5, "midpoint anchoring", [&] {
    if (!solve_errors.empty()) {
      report(5, "midpoint anchoring", false, "not every built-in converged");
      return;
    }
    criterion5(all, certs);
  });
  guarded(6, "envelope rate", criterion6);
  guarded(7, "flat NLQ turnpike shape", [&] {
    const int k = find("nlq_flat");
    if (k < 0) return report(7, "flat NLQ turnpike shape", false, "solve failed");
    criterion7(solved[k], certified[k]);
  });
  guarded(8, "Kepler solve", [&] {
    const int k = find("kepler");
    if (k < 0) return report(8, "Kepler solve", false, "solve failed");
    criterion8(solved[k], certified[k]);
  });
  guarded(9, "conservation suite", [&] {
    if (!solve_errors.empty()) {
      report(9, "conservation suite", false, "not every built-in converged");
      return;
    }
    criterion9(all, certs);
  });
  guarded(10, "equivalence suite", criterion10);

  std::printf("%d criterion/criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
