// Command-line front end: convergence studies, single trajectories, condition
// checks and residual diagnostics.
//
// Exit codes: 0 success, 2 argument errors, 3 solver-singular abort.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <regex>
#include <string>
#include <vector>

#include "bdfsde/harness.hpp"
#include "bdfsde/kernels.hpp"

namespace {

using namespace bdfsde;

constexpr int kExitArgument = 2;
constexpr int kExitSingular = 3;

// "25x2^0..7" or "25,50,100".
std::vector<std::size_t> parse_levels(const std::string& text) {
  static const std::regex geometric(R"(^\s*(\d+)x2\^(\d+)\.\.(\d+)\s*$)");
  std::smatch m;
  std::vector<std::size_t> out;
  if (std::regex_match(text, m, geometric)) {
    const std::size_t base = std::stoull(m[1]);
    const std::size_t lo = std::stoull(m[2]), hi = std::stoull(m[3]);
    if (lo > hi || hi > 40) throw ArgumentError("bad level range '" + text + "'");
    for (std::size_t k = lo; k <= hi; ++k) out.push_back(base << k);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ArgumentError("bad level list '" + text + "'");
    }
    out.push_back(std::stoull(item));
    pos = comma + 1;
  }
  return out;
}

std::vector<SchemeKind> parse_schemes(const std::string& text) {
  std::vector<SchemeKind> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    out.push_back(parse_scheme(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

struct ModelOptions {
  std::string model = "vol32";
  std::optional<double> lambda;
  double sigma = 0.0;
  double linear_a = -1.0;
  std::vector<double> x0;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  std::string solver = "closed-form";
  int newton_iterations = 5;
  double newton_tol = 0.0;
  std::string newton_start = "prev";
  bool override_guard = false;

  void attach(CLI::App& app) {
    app.add_option("--model", model, "vol32, toy2d or linear");
    app.add_option("--lambda", lambda, "Stiffness parameter (default 4 for vol32, 96 for toy2d)");
    app.add_option("--sigma", sigma, "Noise intensity");
    app.add_option("--linear-a", linear_a, "Drift coefficient of the linear model");
    app.add_option("--x0", x0, "Initial state (default: 1, or 2 3 for toy2d)")->delimiter(',');
    app.add_option("--horizon", horizon, "Final time T");
    app.add_option("--seed", seed, "Base seed of the noise");
    app.add_option("--solver", solver, "closed-form or newton");
    app.add_option("--newton-iterations", newton_iterations, "Newton iterations K");
    app.add_option("--newton-tol", newton_tol, "Stop Newton once |Phi| <= tol (0: always K)");
    app.add_option("--newton-start", newton_start, "Newton start: prev or rhs");
    app.add_flag("--override-step-guard", override_guard, "Allow h >= 1/(beta L)");
  }

  void apply(ExperimentConfig& cfg) const {
    cfg.model.kind = parse_model(model);
    cfg.model.lambda = lambda.value_or(cfg.model.kind == ModelKind::toy2d ? 96.0 : 4.0);
    cfg.model.sigma = sigma;
    cfg.model.linear_a = linear_a;
    if (!x0.empty()) cfg.x0 = x0;
    cfg.horizon = horizon;
    cfg.base_seed = seed;
    cfg.override_step_guard = override_guard;
    if (solver == "closed-form") {
      cfg.solver.mode = SolverMode::closed_form;
    } else if (solver == "newton") {
      cfg.solver.mode = SolverMode::newton;
    } else {
      throw ArgumentError("unknown solver '" + solver + "'");
    }
    cfg.solver.newton_iterations = newton_iterations;
    cfg.solver.newton_tolerance = newton_tol;
    if (newton_start == "prev") {
      cfg.solver.newton_start = NewtonStart::previous_state;
    } else if (newton_start == "rhs") {
      cfg.solver.newton_start = NewtonStart::rhs;
    } else {
      throw ArgumentError("unknown --newton-start '" + newton_start + "'");
    }
  }
};

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

void warn_out_of_theory(const ExperimentConfig& cfg) {
  if (!cfg.model.in_theory()) {
    std::cerr << "note: parameters lie outside the convergence theory\n";
  }
}

void warn_stability(const ExperimentConfig& cfg, SchemeKind s, std::size_t steps) {
  const SdeModel model = cfg.model.build();
  for (const std::string& w :
       stability_warnings(model, coefficients(s), cfg.horizon / static_cast<double>(steps))) {
    std::cerr << "warning: " << to_string(s) << " N=" << steps << ": " << w << '\n';
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Backward Euler and BDF2-Maruyama schemes for SDEs with superlinear coefficients"};
  app.require_subcommand(1);
  std::string kernels = "auto";
  app.add_option("--kernels", kernels, "Kernel backend: auto, scalar or avx2");

  ModelOptions conv_model;
  ExperimentConfig conv;
  std::string conv_schemes = "eulm,bem,bdf2", conv_levels = "25x2^0..7", conv_out, second = "bem";
  std::string reference = "bdf2";
  auto* converge = app.add_subcommand("converge", "Strong-error table with EOC column");
  conv_model.attach(*converge);
  converge->add_option("--schemes", conv_schemes, "Comma-separated subset of eulm,bem,bdf2");
  converge->add_option("--levels", conv_levels, "25x2^0..7 or a comma list");
  converge->add_option("--samples", conv.samples, "Monte Carlo samples M");
  converge->add_option("--ref-steps", conv.ref_steps, "Steps of the reference solution");
  converge->add_option("--reference", reference, "Reference scheme");
  converge->add_option("--threads", conv.threads, "Worker threads");
  converge->add_option("--second-init", second, "Second starting value: bem or copy");
  converge->add_option("--out", conv_out, "CSV path (stdout if omitted)");

  ModelOptions sim_model;
  std::string sim_scheme = "bdf2", sim_out, sim_second = "bem";
  std::size_t sim_steps = 100, sim_sample = 0;
  auto* sim = app.add_subcommand("simulate", "One trajectory as CSV (t, x1, ...)");
  sim_model.attach(*sim);
  sim->add_option("--scheme", sim_scheme, "eulm, bem or bdf2");
  sim->add_option("--steps", sim_steps, "Number of steps N");
  sim->add_option("--sample", sim_sample, "Sample index within the seed");
  sim->add_option("--second-init", sim_second, "Second starting value: bem or copy");
  sim->add_option("--out", sim_out, "CSV path (stdout if omitted)");

  ModelOptions chk_model;
  std::string condition = "monotonicity";
  std::optional<double> chk_eta, chk_L, chk_q;
  double radius = 10.0;
  std::size_t pairs = 100000;
  auto* check = app.add_subcommand("check-model", "Sample the structural conditions");
  chk_model.attach(*check);
  check->add_option("--condition", condition, "monotonicity, coercivity or lipschitz");
  check->add_option("--eta", chk_eta, "eta (default: model constant)");
  check->add_option("--L", chk_L, "L (default: model constant)");
  check->add_option("--q", chk_q, "q (default: model constant)");
  check->add_option("--radius", radius, "Half width of the sampling box");
  check->add_option("--pairs", pairs, "Random samples after the grid pass");

  ModelOptions res_model;
  ExperimentConfig res;
  std::string res_levels = "25x2^0..7", res_out;
  std::size_t res_samples = 1000;
  auto* resid = app.add_subcommand("residuals", "Residual norms of the reference path");
  res_model.attach(*resid);
  resid->add_option("--levels", res_levels, "25x2^0..7 or a comma list");
  resid->add_option("--samples", res_samples, "Monte Carlo samples (at least 100)");
  resid->add_option("--ref-steps", res.ref_steps, "Steps of the reference solution");
  resid->add_option("--threads", res.threads, "Worker threads");
  resid->add_option("--out", res_out, "CSV path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitArgument;
  }

  if (kernels == "scalar") {
    kernels::select(kernels::Backend::scalar);
  } else if (kernels == "avx2") {
    kernels::select(kernels::Backend::avx2);
  } else if (kernels != "auto") {
    throw ArgumentError("unknown kernel backend '" + kernels + "'");
  }

  const auto parse_second = [](const std::string& s) {
    if (s == "bem") return SecondValue::bem_step;
    if (s == "copy") return SecondValue::copy_first;
    throw ArgumentError("unknown --second-init '" + s + "'");
  };

  if (*converge) {
    conv_model.apply(conv);
    conv.schemes = parse_schemes(conv_schemes);
    conv.levels = parse_levels(conv_levels);
    conv.reference = parse_scheme(reference);
    conv.init.second = parse_second(second);
    conv.validate();
    warn_out_of_theory(conv);
    for (SchemeKind s : conv.schemes) {
      for (std::size_t n : conv.levels) warn_stability(conv, s, n);
    }
    emit(format_csv(run_convergence_study(conv)), conv_out);
  } else if (*sim) {
    ExperimentConfig cfg;
    sim_model.apply(cfg);
    cfg.init.second = parse_second(sim_second);
    const SchemeKind s = parse_scheme(sim_scheme);
    warn_stability(cfg, s, sim_steps);
    emit(format_trajectory_csv(simulate(cfg.model, s, cfg, sim_steps, sim_sample)), sim_out);
  } else if (*check) {
    ExperimentConfig cfg;
    chk_model.apply(cfg);
    const SdeModel model = cfg.model.build();
    const ConditionConstants c = model.constants;
    const double L = chk_L.value_or(c.L), q = chk_q.value_or(c.q), eta = chk_eta.value_or(c.eta);
    ConditionReport report;
    if (condition == "monotonicity") {
      report = check_monotonicity(model, eta, L, radius, pairs, cfg.base_seed);
    } else if (condition == "coercivity") {
      report = check_coercivity(model, L, q, radius, pairs, cfg.base_seed);
    } else if (condition == "lipschitz") {
      double lip = L;
      if (!chk_L) {
        if (cfg.model.kind == ModelKind::vol32) {
          lip = ThreeHalvesVol{cfg.model.lambda, cfg.model.sigma}.lipschitz_constant();
        } else if (cfg.model.kind == ModelKind::toy2d) {
          lip = ToySpde2D{cfg.model.lambda, cfg.model.sigma}.lipschitz_constant();
        }
      }
      report = check_local_lipschitz_f(model, lip, q, radius, pairs, cfg.base_seed);
    } else {
      throw ArgumentError("unknown condition '" + condition + "'");
    }
    std::printf("condition=%s model=%s tested=%zu violations=%zu grid_violations=%zu "
                "worst_slack=%.6g\n",
                to_string(report.condition).c_str(), model.name.c_str(), report.pairs_tested,
                report.violation_count, report.grid_violations, report.worst_slack);
    for (const Violation& v : report.violations) {
      std::printf("  x1=");
      for (double x : v.x1) std::printf(" %.6g", x);
      if (!v.x2.empty()) {
        std::printf(" x2=");
        for (double x : v.x2) std::printf(" %.6g", x);
      }
      std::printf(" lhs=%.6g rhs=%.6g\n", v.lhs, v.rhs);
    }
  } else if (*resid) {
    res_model.apply(res);
    res.levels = parse_levels(res_levels);
    emit(format_residual_csv(estimate_residuals(res, res_samples)), res_out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const bdfsde::SolverSingularError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSingular;
  } catch (const bdfsde::ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitArgument;
  } catch (const bdfsde::ConfigurationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitArgument;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
