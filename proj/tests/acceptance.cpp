// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bdfsde/harness.hpp"

using namespace bdfsde;

namespace {

// Pinned tolerances and sizes.
constexpr double kTableRelTol = 0.03;         // per-cell relative deviation from the printed value
constexpr double kTablePrintSlack = 0.5e-6;   // half a unit in the last printed digit
constexpr double kTableEocTol = 0.03;
constexpr std::size_t kStochasticSamples = 10000;
constexpr double kHalfOrderLo = 0.40, kHalfOrderHi = 0.65;
constexpr double kSmallNoiseFactor = 1.5;
constexpr std::size_t kToySamples = 1000;
constexpr double kToyEocLo = 0.75, kToyEocHi = 1.05;
constexpr std::size_t kIdentityTuples = 100000;
constexpr double kIdentityTol = 1e-12;
constexpr std::size_t kClosedFormTrials = 100000;
constexpr double kClosedFormTol = 1e-12;
constexpr std::size_t kNewtonTrials = 1000;
constexpr double kNewtonTol = 1e-12;
constexpr std::size_t kLmmTrials = 100;
constexpr double kLmmTol = 1e-14;
constexpr std::size_t kCheckerSamples = 100000;
constexpr double kCheckerRadius = 10.0;
constexpr std::size_t kResidualSamples = 1000;
constexpr double kResidualRatioLo = 1.7, kResidualRatioHi = 2.3;
constexpr std::size_t kReproSamples = 500;

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

ExperimentConfig vol32_config(double lambda, double sigma) {
  ExperimentConfig c;
  c.model = {ModelKind::vol32, lambda, sigma};
  c.threads = worker_threads();
  c.base_seed = 20240601;
  return c;
}

// Compares one scheme column against printed table values.
void compare_column(Outcome& o, const ErrorTable& t, SchemeKind s,
                    const std::vector<double>& errors, const std::vector<double>& eocs) {
  for (std::size_t r = 0; r < errors.size(); ++r) {
    const auto& cell = t.cell(r, s);
    if (!cell.error) {
      o.require(false, to_string(s) + " N=" + std::to_string(t.rows[r].steps) + " exploded");
      continue;
    }
    const double dev = std::abs(*cell.error - errors[r]);
    o.require(dev <= std::max(kTableRelTol * errors[r], kTablePrintSlack),
              to_string(s) + " N=" + std::to_string(t.rows[r].steps) + " error " +
                  fmt("%.6g", *cell.error) + " vs " + fmt("%.6f", errors[r]));
  }
  for (std::size_t r = 0; r < eocs.size(); ++r) {
    const auto& cell = t.cell(r + 1, s);
    o.require(cell.eoc && std::abs(round2(*cell.eoc) - eocs[r]) <= kTableEocTol + 1e-9,
              to_string(s) + " N=" + std::to_string(t.rows[r + 1].steps) + " EOC " +
                  (cell.eoc ? fmt("%.2f", *cell.eoc) : "-") + " vs " + fmt("%.2f", eocs[r]));
  }
}

std::optional<double> mean_last_eocs(const ErrorTable& t, SchemeKind s, std::size_t count) {
  double sum = 0.0;
  for (std::size_t r = t.rows.size() - count; r < t.rows.size(); ++r) {
    const auto& e = t.cell(r, s).eoc;
    if (!e) return std::nullopt;
    sum += *e;
  }
  return sum / static_cast<double>(count);
}

std::string opt(const std::optional<double>& v) { return v ? fmt("%.3f", *v) : "-"; }

// 1 ---------------------------------------------------------------------------
Outcome table_non_stiff() {
  auto c = vol32_config(4.0, 0.0);
  c.samples = 1;
  c.schemes = {SchemeKind::bem, SchemeKind::bdf2};
  const auto t = run_convergence_study(c);
  Outcome o;
  compare_column(o, t, SchemeKind::bem,
                 {0.020186, 0.010528, 0.005388, 0.002726, 0.001371, 0.000688, 0.000344, 0.000172},
                 {0.94, 0.97, 0.98, 0.99, 1.00, 1.00, 1.00});
  compare_column(o, t, SchemeKind::bdf2,
                 {0.010594, 0.003739, 0.001134, 0.000325, 0.000088, 0.000023, 0.000006, 0.000002},
                 {1.50, 1.72, 1.80, 1.89, 1.93, 1.96, 1.98});
  if (o.pass) {
    o.detail = "bem N=3200 " + fmt("%.6g", *t.cell(7, SchemeKind::bem).error) + ", bdf2 N=3200 " +
               fmt("%.6g", *t.cell(7, SchemeKind::bdf2).error);
  }
  return o;
}

// 2 ---------------------------------------------------------------------------
Outcome table_stiff() {
  auto c = vol32_config(25.0, 0.0);
  c.samples = 1;
  c.schemes = {SchemeKind::bem, SchemeKind::bdf2};
  const auto t = run_convergence_study(c);
  Outcome o;
  compare_column(o, t, SchemeKind::bem,
                 {0.114050, 0.067366, 0.038126, 0.020389, 0.010594, 0.005404, 0.002730, 0.001372},
                 {});
  const auto& a = t.cell(0, SchemeKind::bem).error;
  const auto& b = t.cell(0, SchemeKind::bdf2).error;
  o.require(a && b && *a == *b, "bdf2 N=25 differs from bem N=25");
  if (o.pass) o.detail = "N=25 shared error " + fmt("%.17g", *a);
  return o;
}

// 3 ---------------------------------------------------------------------------
Outcome half_order() {
  auto c = vol32_config(4.0, 1.0);
  c.samples = kStochasticSamples;
  c.schemes = {SchemeKind::bem, SchemeKind::bdf2};
  c.levels = {25, 50, 100, 200, 400, 800};
  const auto t = run_convergence_study(c);
  Outcome o;
  for (SchemeKind s : c.schemes) {
    const auto m = mean_last_eocs(t, s, 3);
    o.require(m && *m >= kHalfOrderLo && *m <= kHalfOrderHi,
              to_string(s) + " mean EOC " + opt(m) + " outside window");
    if (o.pass) o.detail += to_string(s) + " mean EOC " + opt(m) + " ";
  }
  return o;
}

// 4 ---------------------------------------------------------------------------
Outcome small_noise_advantage() {
  auto c = vol32_config(4.0, 1.0 / 3.0);
  c.samples = kStochasticSamples;
  c.schemes = {SchemeKind::bem, SchemeKind::bdf2};
  c.levels = {25, 50, 100, 200, 400};
  const auto t = run_convergence_study(c);
  Outcome o;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& bem = t.cell(r, SchemeKind::bem).error;
    const auto& bdf = t.cell(r, SchemeKind::bdf2).error;
    o.require(bem && bdf && *bdf < *bem,
              "N=" + std::to_string(t.rows[r].steps) + " bdf2 not below bem");
  }
  const auto& bem100 = t.cell(2, SchemeKind::bem).error;
  const auto& bdf100 = t.cell(2, SchemeKind::bdf2).error;
  const double factor = (bem100 && bdf100) ? *bem100 / *bdf100 : 0.0;
  o.require(factor >= kSmallNoiseFactor, "factor at N=100 is " + fmt("%.3f", factor));
  if (o.pass) {
    o.detail = "N=100 bem " + fmt("%.6f", *bem100) + " bdf2 " + fmt("%.6f", *bdf100) +
               " factor " + fmt("%.2f", factor);
  }
  return o;
}

// 5 ---------------------------------------------------------------------------
Outcome stiff_explosions() {
  Outcome o;
  std::string summary;
  for (double sigma : {0.0, 0.47, 1.0}) {
    ExperimentConfig c;
    c.model = {ModelKind::toy2d, 96.0, sigma};
    c.x0 = StateVector{2.0, 3.0};
    c.samples = sigma == 0.0 ? 1 : kToySamples;
    c.threads = worker_threads();
    c.base_seed = 96;
    c.solver.mode = SolverMode::newton;
    const auto t = run_convergence_study(c);
    const std::string tag = "sigma=" + fmt("%g", sigma) + " ";
    o.require(!t.cell(0, SchemeKind::eulm).error, tag + "eulm N=25 not exploded");
    if (sigma == 1.0) {
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        o.require(!t.cell(r, SchemeKind::eulm).error,
                  tag + "eulm N=" + std::to_string(t.rows[r].steps) + " not exploded");
      }
    }
    for (SchemeKind s : {SchemeKind::bem, SchemeKind::bdf2}) {
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& cell = t.cell(r, s);
        o.require(cell.error && cell.exploded_samples == 0,
                  tag + to_string(s) + " N=" + std::to_string(t.rows[r].steps) + " exploded");
      }
      if (sigma == 1.0) {
        // Mid levels N = 200, 400, 800.
        double sum = 0.0;
        bool all = true;
        for (std::size_t r = 3; r <= 5; ++r) {
          const auto& e = t.cell(r, s).eoc;
          all = all && e;
          sum += e.value_or(0.0);
        }
        const double mean = sum / 3.0;
        o.require(all && mean >= kToyEocLo && mean <= kToyEocHi,
                  tag + to_string(s) + " mid-level EOC " + fmt("%.3f", mean));
        summary += to_string(s) + " mid EOC " + fmt("%.2f", mean) + " ";
      }
    }
  }
  if (o.pass) o.detail = summary;
  return o;
}

// 6 ---------------------------------------------------------------------------
Outcome gstability() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst = 0.0;
  for (std::size_t m : {1u, 2u, 5u}) {
    StateVector a(m), b(m), c(m);
    for (std::size_t n = 0; n < kIdentityTuples; ++n) {
      double scale = 1.0;
      for (std::size_t i = 0; i < m; ++i) {
        a[i] = u(rng);
        b[i] = u(rng);
        c[i] = u(rng);
        scale += a[i] * a[i] + b[i] * b[i] + c[i] * c[i];
      }
      const auto [l1, r1] = gstability_identity_one(a, b);
      const auto [l2, r2] = gstability_identity_two(a, b, c);
      worst = std::max({worst, std::abs(l1 - r1) / scale, std::abs(l2 - r2) / scale});
    }
  }
  Outcome o;
  o.require(worst <= kIdentityTol, "worst relative gap " + fmt("%.3g", worst));
  if (o.pass) o.detail = "worst relative gap " + fmt("%.3g", worst);
  return o;
}

// 7 ---------------------------------------------------------------------------
Outcome implicit_solves() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lam(0.1, 100.0), sig(0.0, 3.0), r(-100.0, 100.0),
      frac(1e-6, 1.0 - 1e-6);
  double worst_cf = 0.0;
  for (std::size_t n = 0; n < kClosedFormTrials; ++n) {
    const double lambda = lam(rng), sigma = sig(rng), rhs = r(rng);
    const double beta = n % 2 ? 1.0 : 2.0 / 3.0;
    const auto model = ThreeHalvesVol{lambda, sigma}.to_model();
    const double h = frac(rng) * StepGuard::for_scheme(model, n % 2 ? SchemeCoefficients::backward_euler()
                                                                    : SchemeCoefficients::bdf2())
                                     .max_h;
    const double x = closed_form_32vol(lambda, sigma, beta, h, rhs);
    const double phi = x - beta * h * (x - lambda * x * std::abs(x)) - rhs;
    worst_cf = std::max(worst_cf, std::abs(phi) / (1.0 + std::abs(rhs)));
  }
  o.require(worst_cf <= kClosedFormTol, "closed-form residual " + fmt("%.3g", worst_cf));

  const double lambda = 96.0, c = (1.0 - lambda) / 2.0;
  const auto toy = ToySpde2D{lambda, 0.47}.to_model();
  ImplicitSolverConfig cfg;
  cfg.mode = SolverMode::newton;
  ImplicitSolver solver(toy, cfg);
  std::uniform_real_distribution<double> u(-3.0, 3.0), hh(1e-4, 1.0 / 25.0);
  double worst_nt = 0.0;
  for (std::size_t n = 0; n < kNewtonTrials; ++n) {
    const double beta = n % 2 ? 1.0 : 2.0 / 3.0, h = hh(rng);
    const StateVector rhs{u(rng), u(rng)}, start{u(rng), u(rng)};
    StateVector got(2);
    solver.solve(beta, h, rhs, start, got);
    // Explicit 2x2 update, five times from the same start.
    std::array<double, 2> x{start[0], start[1]};
    const double bh = beta * h;
    for (int k = 0; k < 5; ++k) {
      const double p1 = x[0] - bh * (c * (x[0] - x[1]) - x[0] * x[0] * x[0]) - rhs[0];
      const double p2 = x[1] - bh * (c * (x[1] - x[0]) - x[1] * x[1] * x[1]) - rhs[1];
      const double a11 = 1.0 - bh * (c - 3.0 * x[0] * x[0]);
      const double a22 = 1.0 - bh * (c - 3.0 * x[1] * x[1]);
      const double det = a11 * a22 - (bh * c) * (bh * c);
      x = {x[0] - (a22 * p1 - bh * c * p2) / det, x[1] - (a11 * p2 - bh * c * p1) / det};
    }
    const double scale = 1.0 + std::abs(x[0]) + std::abs(x[1]);
    worst_nt = std::max({worst_nt, std::abs(got[0] - x[0]) / scale, std::abs(got[1] - x[1]) / scale});
  }
  o.require(worst_nt <= kNewtonTol, "Newton vs 2x2 oracle " + fmt("%.3g", worst_nt));
  if (o.pass) {
    o.detail = "closed-form residual " + fmt("%.3g", worst_cf) + ", Newton gap " + fmt("%.3g", worst_nt);
  }
  return o;
}

// 8 ---------------------------------------------------------------------------
Outcome lmm_equivalence() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0), w(-0.3, 0.3);
  const auto vol = ThreeHalvesVol{4.0, 1.0}.to_model();
  const auto toy = ToySpde2D{96.0, 0.47}.to_model();
  ImplicitSolverConfig newton;
  newton.mode = SolverMode::newton;
  double worst[3] = {0.0, 0.0, 0.0};
  const auto rel = [](const StateVector& a, const StateVector& b) {
    double d = 0.0, s = 1e-300;
    for (std::size_t i = 0; i < a.size(); ++i) {
      d = std::max(d, std::abs(a[i] - b[i]));
      s = std::max(s, std::abs(b[i]));
    }
    return d / s;
  };
  for (std::size_t n = 0; n < kLmmTrials; ++n) {
    const bool use_toy = n % 2;
    const SdeModel& m = use_toy ? toy : vol;
    const ImplicitSolverConfig cfg = use_toy ? newton : ImplicitSolverConfig{};
    const double h = use_toy ? 0.01 : 0.02;
    StateVector x1(m.state_dim), x0(m.state_dim), dw2(m.noise_dim), dw1(m.noise_dim);
    for (auto* v : {&x1, &x0, &dw2, &dw1}) {
      for (double& e : *v) e = (v == &x1 || v == &x0) ? u(rng) : w(rng);
    }
    const std::vector<StateVector> s1{x1}, f1{m.eval_drift(x1)}, n1{dw2};
    const std::vector<StateVector> s2{x0, x1}, f2{m.eval_drift(x0), m.eval_drift(x1)}, n2{dw1, dw2};
    worst[0] = std::max(worst[0], rel(step_lmm(m, cfg, SchemeCoefficients::explicit_euler(), s1, f1, n1, h).state,
                                      step_explicit_euler(m, x1, h, dw2)));
    worst[1] = std::max(worst[1], rel(step_lmm(m, cfg, SchemeCoefficients::backward_euler(), s1, f1, n1, h).state,
                                      step_bem(m, cfg, x1, h, dw2)));
    worst[2] = std::max(worst[2], rel(step_lmm(m, cfg, SchemeCoefficients::bdf2(), s2, f2, n2, h).state,
                                      step_bdf2(m, cfg, x1, x0, h, dw2, dw1)));
  }
  Outcome o;
  const char* names[3] = {"eulm", "bem", "bdf2"};
  std::string detail;
  for (int i = 0; i < 3; ++i) {
    o.require(worst[i] <= kLmmTol, std::string(names[i]) + " gap " + fmt("%.3g", worst[i]));
    detail += std::string(names[i]) + " " + fmt("%.3g", worst[i]) + " ";
  }
  if (o.pass) o.detail = "max relative gaps: " + detail;
  return o;
}

// 9 ---------------------------------------------------------------------------
Outcome condition_checker() {
  Outcome o;
  std::size_t checks = 0;
  const auto expect_clean = [&](const ConditionReport& r, const std::string& tag) {
    ++checks;
    o.require(r.clean(), tag + " " + to_string(r.condition) + ": " +
                             std::to_string(r.violation_count) + " violations");
  };
  for (double lambda : {4.0, 25.0}) {
    for (double sigma : {0.0, 1.0 / 3.0, 1.0}) {
      const ThreeHalvesVol p{lambda, sigma};
      const auto m = p.to_model();
      const auto k = p.constants();
      const std::string tag = "vol32 lambda=" + fmt("%g", lambda) + " sigma=" + fmt("%.3g", sigma);
      expect_clean(check_monotonicity(m, k.eta, k.L, kCheckerRadius, kCheckerSamples, 91), tag);
      expect_clean(check_coercivity(m, k.L, k.q, kCheckerRadius, kCheckerSamples, 92), tag);
      expect_clean(check_local_lipschitz_f(m, p.lipschitz_constant(), k.q, kCheckerRadius,
                                           kCheckerSamples, 93),
                   tag);
    }
  }
  for (double sigma : {0.0, 0.47}) {
    const ToySpde2D p{96.0, sigma};
    const auto m = p.to_model();
    const auto k = p.constants();
    const std::string tag = "toy2d sigma=" + fmt("%g", sigma);
    expect_clean(check_monotonicity(m, k.eta, k.L, kCheckerRadius, kCheckerSamples, 94), tag);
    expect_clean(check_coercivity(m, k.L, k.q, kCheckerRadius, kCheckerSamples, 95), tag);
    expect_clean(check_local_lipschitz_f(m, p.lipschitz_constant(), k.q, kCheckerRadius,
                                         kCheckerSamples, 96),
                 tag);
  }
  const auto coer = check_coercivity(ThreeHalvesVol{1.0, 1.0}.to_model(), 1.0, 2.0,
                                     kCheckerRadius, kCheckerSamples, 97);
  o.require(coer.grid_violations > 0 && !coer.violations.empty(),
            "no grid violation of coercivity for lambda=1, sigma=1");
  // eta = 4 > lambda / (2 sigma^2) = 2.
  const auto mono = check_monotonicity(ThreeHalvesVol{4.0, 1.0}.to_model(), 4.0, 1.0,
                                       kCheckerRadius, kCheckerSamples, 98);
  o.require(mono.grid_violations > 0 && !mono.violations.empty(),
            "no grid violation of monotonicity for eta above lambda/(2 sigma^2)");
  if (o.pass) {
    o.detail = std::to_string(checks) + " clean reports; violations found: coercivity " +
               std::to_string(coer.grid_violations) + ", monotonicity " +
               std::to_string(mono.grid_violations) + " (grid pass)";
  }
  return o;
}

// 10 --------------------------------------------------------------------------
Outcome residual_scaling() {
  auto c = vol32_config(4.0, 1.0);
  c.levels = {100, 200, 400, 800};
  const auto r = estimate_residuals(c, kResidualSamples);
  Outcome o;
  std::string detail;
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& ratio = r.rows[i].bem_ratio;
    o.require(ratio && *ratio >= kResidualRatioLo && *ratio <= kResidualRatioHi,
              "ratio " + std::to_string(r.rows[i - 1].steps) + "/" + std::to_string(r.rows[i].steps) +
                  " = " + opt(ratio));
    detail += opt(ratio) + " ";
  }
  if (o.pass) o.detail = "ratios " + detail;
  return o;
}

// 11 --------------------------------------------------------------------------
Outcome reproducibility() {
  auto c = vol32_config(4.0, 1.0);
  c.samples = kReproSamples;
  c.levels = {25, 50, 100, 200, 400, 800};
  c.threads = 1;
  const auto serial = format_csv(run_convergence_study(c));
  const auto serial_again = format_csv(run_convergence_study(c));
  c.threads = 8;
  const auto parallel = format_csv(run_convergence_study(c));
  Outcome o;
  o.require(serial == serial_again, "rerun with one thread differs");
  o.require(serial == parallel, "1 vs 8 threads differ");
  if (o.pass) o.detail = std::to_string(serial.size()) + " bytes identical across 1/1/8 threads";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "deterministic non-stiff table (lambda=4, sigma=0)", table_non_stiff},
      {2, "deterministic stiff table (lambda=25, sigma=0)", table_stiff},
      {3, "stochastic order 1/2 (lambda=4, sigma=1)", half_order},
      {4, "small-noise BDF2 advantage (lambda=4, sigma=1/3)", small_noise_advantage},
      {5, "stiff explosion behaviour (toy2d, lambda=96)", stiff_explosions},
      {6, "G-stability identities", gstability},
      {7, "implicit-solve contracts", implicit_solves},
      {8, "generic LMM equivalence", lmm_equivalence},
      {9, "condition checker", condition_checker},
      {10, "residual scaling", residual_scaling},
      {11, "thread-count reproducibility", reproducibility},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s [%2d] %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
