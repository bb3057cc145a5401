#pragma once

// Time steppers for implicit stochastic linear multistep methods, the
// nonlinear solvers behind them, and trajectory integration.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bdfsde/brownian.hpp"
#include "bdfsde/core.hpp"

namespace bdfsde {

enum class SolverMode { closed_form, newton };

/// Where Newton starts: the newest known state X^{j-1}, or the aggregate R^j.
enum class NewtonStart { previous_state, rhs };

struct ImplicitSolverConfig {
  SolverMode mode = SolverMode::closed_form;
  int newton_iterations = 5;
  /// 0 runs exactly newton_iterations steps; otherwise stop once |Phi| <= tol.
  double newton_tolerance = 0.0;
  /// Use Newton when closed_form is requested but the model has no closed form.
  bool fallback_to_newton = true;
  NewtonStart newton_start = NewtonStart::previous_state;
};

/// How the k-1 starting values beyond X^0 are produced for k >= 2.
enum class SecondValue { bem_step, copy_first };

struct InitialValuePolicy {
  SecondValue second = SecondValue::bem_step;
};

/// Well-posedness bound h < 1/(beta_k L) of the implicit recursion.
struct StepGuard {
  double max_h;

  static StepGuard for_scheme(const SdeModel& model, const SchemeCoefficients& coeffs);

  bool admits(double h) const noexcept { return h < max_h; }

  /// Throws ArgumentError unless admits(h) or override_guard.
  void check(double h, bool override_guard = false) const;
};

/// Human-readable notes when h exceeds the (stricter, inconsistently stated)
/// stability step sizes. Empty when h is below every candidate.
std::vector<std::string> stability_warnings(const SdeModel& model, const SchemeCoefficients& coeffs,
                                            double h);

/// Solves x - h*beta*f(x) = rhs for the 3/2-volatility drift f(x) = x - lambda x|x|.
double closed_form_32vol(double lambda, double sigma, double beta, double h, double rhs);

/// Solver bound to one model with preallocated scratch space. Not thread-safe;
/// use one instance per thread.
class ImplicitSolver {
 public:
  ImplicitSolver(const SdeModel& model, ImplicitSolverConfig cfg);

  SolverMode mode() const noexcept { return mode_; }
  const ImplicitSolverConfig& config() const noexcept { return cfg_; }

  /// Writes the solution of x - h*beta*f(x) = rhs into `out`. `guess` is the
  /// Newton start (ignored in closed-form mode). `step` labels errors.
  /// When `residual_trace` is given, |Phi| after each Newton iteration is appended.
  void solve(double beta, double h, std::span<const double> rhs, std::span<const double> guess,
             std::span<double> out, std::size_t step = 0,
             std::vector<double>* residual_trace = nullptr);

  /// One Newton correction x - (I - h beta Jf(x))^{-1} Phi(x).
  void newton_update(double beta, double h, std::span<const double> rhs, std::span<const double> x,
                     std::span<double> out, std::size_t step = 0);

  /// Phi(x) = x - h*beta*f(x) - rhs.
  void residual(double beta, double h, std::span<const double> rhs, std::span<const double> x,
                std::span<double> out);

 private:
  const SdeModel* model_;
  ImplicitSolverConfig cfg_;
  SolverMode mode_;
  std::vector<double> phi_, jac_, delta_, lu_;
};

/// Allocating wrapper; Newton starts from `guess` if given, else from rhs.
StateVector solve_implicit(const SdeModel& model, double beta, double h, std::span<const double> rhs,
                           const ImplicitSolverConfig& cfg,
                           std::optional<std::span<const double>> guess = std::nullopt);

StateVector step_explicit_euler(const SdeModel& model, std::span<const double> x_prev, double h,
                                std::span<const double> dw);

StateVector step_bem(const SdeModel& model, const ImplicitSolverConfig& cfg,
                     std::span<const double> x_prev, double h, std::span<const double> dw);

StateVector step_bdf2(const SdeModel& model, const ImplicitSolverConfig& cfg,
                      std::span<const double> x_prev, std::span<const double> x_prev2, double h,
                      std::span<const double> dw_cur, std::span<const double> dw_prev);

struct LmmStep {
  StateVector state;
  StateVector drift;
};

/// One step of the k-step recursion. Histories run oldest first:
/// states = (U^{j-k}, ..., U^{j-1}), drifts = f of those states and
/// increments = (dW^{j-k+1}, ..., dW^{j}), so the newest increment dW^j
/// multiplies g(U^{j-1}).
LmmStep step_lmm(const SdeModel& model, const ImplicitSolverConfig& cfg,
                 const SchemeCoefficients& coeffs, std::span<const StateVector> states,
                 std::span<const StateVector> drifts, std::span<const StateVector> increments,
                 double h);

struct IntegrateOptions {
  /// Permit h >= 1/(beta_k L).
  bool override_step_guard = false;
};

/// Reusable integrator for many samples of the same model and scheme.
class Integrator {
 public:
  Integrator(const SdeModel& model, SchemeCoefficients coeffs, ImplicitSolverConfig cfg,
             InitialValuePolicy init = {}, IntegrateOptions opts = {});

  const SchemeCoefficients& coefficients() const noexcept { return coeffs_; }

  /// Fills `out` (whose grid must match the increments). Once a state is
  /// non-finite the remaining states are set to NaN. Throws SolverSingularError.
  void run(const IncrementTable& increments, std::span<const double> x0, GridFunction& out);

  GridFunction run(const IncrementTable& increments, std::span<const double> x0);

 private:
  void lmm_step(std::size_t j, const IncrementTable& inc, GridFunction& out);
  void bem_start_step(std::size_t j, const IncrementTable& inc, GridFunction& out);
  void record_history(std::size_t j, const GridFunction& out);

  const SdeModel* model_;
  SchemeCoefficients coeffs_;
  InitialValuePolicy init_;
  IntegrateOptions opts_;
  std::optional<ImplicitSolver> solver_;
  std::size_t m_, d_, k_;
  bool need_drift_;
  std::vector<double> g_hist_, f_hist_;  // ring buffers indexed by j % k
  std::vector<double> rhs_, gdw_;
};

GridFunction integrate(const SdeModel& model, const SchemeCoefficients& coeffs,
                       const ImplicitSolverConfig& cfg, const InitialValuePolicy& init,
                       const TimeGrid& grid, const IncrementTable& increments,
                       std::span<const double> x0, IntegrateOptions opts = {});

}  // namespace bdfsde
