#include "bdfsde/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bdfsde {
namespace {

constexpr double kSingularThreshold = 1e-14;

double euclidean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// y = G * dw with G row-major m x d.
void apply_diffusion(std::span<const double> g, std::span<const double> dw, std::size_t m,
                     std::span<double> y) {
  const std::size_t d = dw.size();
  for (std::size_t i = 0; i < m; ++i) {
    double s = g[i * d] * dw[0];
    for (std::size_t c = 1; c < d; ++c) s += g[i * d + c] * dw[c];
    y[i] = s;
  }
}

void check_dims(const SdeModel& model, std::span<const double> x, std::span<const double> dw) {
  if (x.size() != model.state_dim) throw ArgumentError("state has wrong dimension");
  if (dw.size() != model.noise_dim) throw ArgumentError("increment has wrong dimension");
}

SolverMode resolve_mode(const SdeModel& model, const ImplicitSolverConfig& cfg) {
  if (cfg.newton_iterations < 1) throw ArgumentError("newton_iterations must be at least 1");
  SolverMode mode = cfg.mode;
  if (mode == SolverMode::closed_form && !model.has_closed_form()) {
    if (!cfg.fallback_to_newton) {
      throw ConfigurationError(model.name + ": no closed-form implicit solve available");
    }
    mode = SolverMode::newton;
  }
  if (mode == SolverMode::newton && !model.has_jacobian()) {
    throw ConfigurationError(model.name + ": Newton solve requires a drift Jacobian");
  }
  return mode;
}

std::span<const double> newton_guess(const ImplicitSolverConfig& cfg,
                                     std::span<const double> x_prev,
                                     std::span<const double> rhs) {
  return cfg.newton_start == NewtonStart::previous_state ? x_prev : rhs;
}

}  // namespace

// ---------------------------------------------------------------------------
// Step guard

StepGuard StepGuard::for_scheme(const SdeModel& model, const SchemeCoefficients& coeffs) {
  const double bl = coeffs.leading_beta() * model.constants.L;
  return {bl > 0.0 ? 1.0 / bl : std::numeric_limits<double>::infinity()};
}

void StepGuard::check(double h, bool override_guard) const {
  if (!(h > 0.0)) throw ArgumentError("step size must be positive");
  if (!admits(h) && !override_guard) {
    std::ostringstream os;
    os << "step size " << h << " violates the solvability bound h < " << max_h;
    throw ArgumentError(os.str());
  }
}

std::vector<std::string> stability_warnings(const SdeModel& model, const SchemeCoefficients& coeffs,
                                            double h) {
  const double L = model.constants.L;
  std::vector<double> candidates;
  if (coeffs.name() == "bem") {
    candidates = {1.0 / std::max(4.0 * L, 2.0), 1.0 / (2.0 * (4.0 * L + 1.0))};
  } else if (coeffs.name() == "bdf2") {
    candidates = {1.0 / (2.0 * (4.0 * L + 1.0)), 1.0 / std::max(8.0 * L, 2.0)};
  }
  std::vector<std::string> out;
  for (double hmax : candidates) {
    if (h > hmax) {
      std::ostringstream os;
      os << coeffs.name() << ": h = " << h << " exceeds stability step size " << hmax;
      out.push_back(os.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solvers

double closed_form_32vol(double lambda, double /*sigma*/, double beta, double h, double rhs) {
  const double bhl = beta * h * lambda;
  const double c = (1.0 - beta * h) / (2.0 * bhl);
  const double r = std::abs(rhs) / bhl;
  const double root = std::sqrt(c * c + r);
  // Rationalised -c + sqrt(c^2 + r) avoids cancellation for small |rhs|.
  const double mag = c > 0.0 ? r / (c + root) : root - c;
  return rhs >= 0.0 ? mag : -mag;
}

ImplicitSolver::ImplicitSolver(const SdeModel& model, ImplicitSolverConfig cfg)
    : model_(&model), cfg_(cfg), mode_(resolve_mode(model, cfg)) {
  const std::size_t m = model.state_dim;
  phi_.resize(m);
  jac_.resize(m * m);
  delta_.resize(m);
  lu_.resize(m * m);
}

void ImplicitSolver::residual(double beta, double h, std::span<const double> rhs,
                              std::span<const double> x, std::span<double> out) {
  model_->drift(x, out);
  const double hb = h * beta;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - hb * out[i] - rhs[i];
}

void ImplicitSolver::newton_update(double beta, double h, std::span<const double> rhs,
                                   std::span<const double> x, std::span<double> out,
                                   std::size_t step) {
  const std::size_t m = model_->state_dim;
  const double hb = h * beta;
  residual(beta, h, rhs, x, phi_);
  model_->drift_jacobian(x, jac_);
  // DPhi = I - hb * Jf, in place.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < m; ++c) jac_[i * m + c] = (i == c ? 1.0 : 0.0) - hb * jac_[i * m + c];
  }
  if (m == 1) {
    if (std::abs(jac_[0]) < kSingularThreshold) {
      throw SolverSingularError("singular Newton matrix", step);
    }
    delta_[0] = phi_[0] / jac_[0];
  } else if (m == 2) {
    const double a = jac_[0], b = jac_[1], c = jac_[2], d = jac_[3];
    const double det = a * d - b * c;
    if (std::abs(det) < kSingularThreshold) {
      throw SolverSingularError("singular Newton matrix", step);
    }
    delta_[0] = (d * phi_[0] - b * phi_[1]) / det;
    delta_[1] = (a * phi_[1] - c * phi_[0]) / det;
  } else {
    // Gaussian elimination with partial pivoting on [DPhi | Phi].
    std::copy(jac_.begin(), jac_.end(), lu_.begin());
    std::copy(phi_.begin(), phi_.end(), delta_.begin());
    for (std::size_t col = 0; col < m; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < m; ++r) {
        if (std::abs(lu_[r * m + col]) > std::abs(lu_[piv * m + col])) piv = r;
      }
      if (std::abs(lu_[piv * m + col]) < kSingularThreshold) {
        throw SolverSingularError("singular Newton matrix", step);
      }
      if (piv != col) {
        for (std::size_t c = 0; c < m; ++c) std::swap(lu_[piv * m + c], lu_[col * m + c]);
        std::swap(delta_[piv], delta_[col]);
      }
      for (std::size_t r = col + 1; r < m; ++r) {
        const double f = lu_[r * m + col] / lu_[col * m + col];
        for (std::size_t c = col; c < m; ++c) lu_[r * m + c] -= f * lu_[col * m + c];
        delta_[r] -= f * delta_[col];
      }
    }
    for (std::size_t r = m; r-- > 0;) {
      double s = delta_[r];
      for (std::size_t c = r + 1; c < m; ++c) s -= lu_[r * m + c] * delta_[c];
      delta_[r] = s / lu_[r * m + r];
    }
  }
  for (std::size_t i = 0; i < m; ++i) out[i] = x[i] - delta_[i];
}

void ImplicitSolver::solve(double beta, double h, std::span<const double> rhs,
                           std::span<const double> guess, std::span<double> out, std::size_t step,
                           std::vector<double>* residual_trace) {
  if (mode_ == SolverMode::closed_form) {
    model_->closed_form_implicit(beta, h, rhs, out);
    return;
  }
  if (out.data() != guess.data()) std::copy(guess.begin(), guess.end(), out.begin());
  for (int it = 0; it < cfg_.newton_iterations; ++it) {
    if (cfg_.newton_tolerance > 0.0) {
      residual(beta, h, rhs, out, phi_);
      if (euclidean(phi_) <= cfg_.newton_tolerance) break;
    }
    newton_update(beta, h, rhs, out, out, step);
    if (residual_trace != nullptr) {
      residual(beta, h, rhs, out, phi_);
      residual_trace->push_back(euclidean(phi_));
    }
  }
}

StateVector solve_implicit(const SdeModel& model, double beta, double h, std::span<const double> rhs,
                           const ImplicitSolverConfig& cfg,
                           std::optional<std::span<const double>> guess) {
  if (rhs.size() != model.state_dim) throw ArgumentError("solve_implicit: rhs has wrong dimension");
  if (!(h > 0.0) || !(beta > 0.0)) throw ArgumentError("solve_implicit: need h > 0 and beta > 0");
  ImplicitSolver solver(model, cfg);
  StateVector x(model.state_dim);
  solver.solve(beta, h, rhs, guess.value_or(rhs), x);
  return x;
}

// ---------------------------------------------------------------------------
// Dedicated steppers

StateVector step_explicit_euler(const SdeModel& model, std::span<const double> x_prev, double h,
                                std::span<const double> dw) {
  check_dims(model, x_prev, dw);
  const std::size_t m = model.state_dim;
  StateVector f(m), gdw(m), x(m);
  model.drift(x_prev, f);
  const DiffusionMatrix g = model.eval_diffusion(x_prev);
  apply_diffusion(g.entries, dw, m, gdw);
  for (std::size_t i = 0; i < m; ++i) x[i] = x_prev[i] + h * f[i] + gdw[i];
  return x;
}

StateVector step_bem(const SdeModel& model, const ImplicitSolverConfig& cfg,
                     std::span<const double> x_prev, double h, std::span<const double> dw) {
  check_dims(model, x_prev, dw);
  const std::size_t m = model.state_dim;
  StateVector rhs(m), x(m);
  const DiffusionMatrix g = model.eval_diffusion(x_prev);
  apply_diffusion(g.entries, dw, m, rhs);
  for (std::size_t i = 0; i < m; ++i) rhs[i] = x_prev[i] + rhs[i];
  ImplicitSolver solver(model, cfg);
  solver.solve(1.0, h, rhs, newton_guess(cfg, x_prev, rhs), x);
  return x;
}

StateVector step_bdf2(const SdeModel& model, const ImplicitSolverConfig& cfg,
                      std::span<const double> x_prev, std::span<const double> x_prev2, double h,
                      std::span<const double> dw_cur, std::span<const double> dw_prev) {
  check_dims(model, x_prev, dw_cur);
  check_dims(model, x_prev2, dw_prev);
  const std::size_t m = model.state_dim;
  StateVector cur(m), prev(m), rhs(m), x(m);
  apply_diffusion(model.eval_diffusion(x_prev).entries, dw_cur, m, cur);
  apply_diffusion(model.eval_diffusion(x_prev2).entries, dw_prev, m, prev);
  const double third = 1.0 / 3.0;
  const double four_thirds = 4.0 / 3.0;
  for (std::size_t i = 0; i < m; ++i) {
    rhs[i] = four_thirds * x_prev[i] - third * x_prev2[i] + cur[i] - third * prev[i];
  }
  ImplicitSolver solver(model, cfg);
  solver.solve(2.0 / 3.0, h, rhs, newton_guess(cfg, x_prev, rhs), x);
  return x;
}

// ---------------------------------------------------------------------------
// Generic k-step recursion

LmmStep step_lmm(const SdeModel& model, const ImplicitSolverConfig& cfg,
                 const SchemeCoefficients& coeffs, std::span<const StateVector> states,
                 std::span<const StateVector> drifts, std::span<const StateVector> increments,
                 double h) {
  const std::size_t k = coeffs.order();
  if (states.size() != k || drifts.size() != k || increments.size() != k) {
    throw ArgumentError("step_lmm: histories must have length k = " + std::to_string(k));
  }
  const std::size_t m = model.state_dim;
  for (std::size_t l = 0; l < k; ++l) check_dims(model, states[l], increments[l]);
  for (const auto& f : drifts) {
    if (f.size() != m) throw ArgumentError("step_lmm: drift history has wrong dimension");
  }
  const auto alpha = coeffs.alpha();
  const auto beta = coeffs.beta();
  const auto gamma = coeffs.gamma();
  // History slot k - l holds U^{j-l}; increment slot k - l holds dW^{j-l+1}.
  StateVector rhs(m, 0.0), gdw(m);
  bool first = true;
  auto accumulate = [&](double coef, std::span<const double> v) {
    for (std::size_t i = 0; i < m; ++i) rhs[i] = first ? coef * v[i] : rhs[i] + coef * v[i];
    first = false;
  };
  for (std::size_t l = 1; l <= k; ++l) {
    if (alpha[k - l] != 0.0) accumulate(-alpha[k - l], states[k - l]);
  }
  for (std::size_t l = 1; l <= k; ++l) {
    if (beta[k - l] != 0.0) accumulate(h * beta[k - l], drifts[k - l]);
  }
  for (std::size_t l = 1; l <= k; ++l) {
    if (gamma[k - l] == 0.0) continue;
    apply_diffusion(model.eval_diffusion(states[k - l]).entries, increments[k - l], m, gdw);
    accumulate(gamma[k - l], gdw);
  }
  LmmStep out{StateVector(m), StateVector(m)};
  if (coeffs.implicit()) {
    StepGuard::for_scheme(model, coeffs).check(h);
    ImplicitSolver solver(model, cfg);
    solver.solve(coeffs.leading_beta(), h, rhs, newton_guess(cfg, states[k - 1], rhs), out.state);
  } else {
    out.state = rhs;
  }
  model.drift(out.state, out.drift);
  return out;
}

// ---------------------------------------------------------------------------
// Integrator

Integrator::Integrator(const SdeModel& model, SchemeCoefficients coeffs, ImplicitSolverConfig cfg,
                       InitialValuePolicy init, IntegrateOptions opts)
    : model_(&model), coeffs_(std::move(coeffs)), init_(init), opts_(opts),
      m_(model.state_dim), d_(model.noise_dim), k_(coeffs_.order()),
      need_drift_(coeffs_.uses_drift_history()) {
  if (coeffs_.implicit() || (k_ >= 2 && init_.second == SecondValue::bem_step)) {
    solver_.emplace(model, cfg);
  }
  g_hist_.resize(k_ * m_ * d_);
  f_hist_.resize(need_drift_ ? k_ * m_ : 0);
  rhs_.resize(m_);
  gdw_.resize(m_);
}

void Integrator::record_history(std::size_t j, const GridFunction& out) {
  const std::size_t slot = j % k_;
  model_->diffusion(out.state(j), std::span<double>(g_hist_).subspan(slot * m_ * d_, m_ * d_));
  if (need_drift_) model_->drift(out.state(j), std::span<double>(f_hist_).subspan(slot * m_, m_));
}

void Integrator::bem_start_step(std::size_t j, const IncrementTable& inc, GridFunction& out) {
  const auto g = std::span<const double>(g_hist_).subspan(((j - 1) % k_) * m_ * d_, m_ * d_);
  apply_diffusion(g, inc.increment(j), m_, gdw_);
  const auto prev = out.state(j - 1);
  for (std::size_t i = 0; i < m_; ++i) rhs_[i] = prev[i] + gdw_[i];
  solver_->solve(1.0, inc.grid().step(), rhs_, newton_guess(solver_->config(), prev, rhs_),
                out.state(j), j);
}

void Integrator::lmm_step(std::size_t j, const IncrementTable& inc, GridFunction& out) {
  const auto alpha = coeffs_.alpha();
  const auto beta = coeffs_.beta();
  const auto gamma = coeffs_.gamma();
  const double h = inc.grid().step();
  bool first = true;
  auto accumulate = [&](double coef, std::span<const double> v) {
    if (first) {
      for (std::size_t i = 0; i < m_; ++i) rhs_[i] = coef * v[i];
      first = false;
    } else {
      for (std::size_t i = 0; i < m_; ++i) rhs_[i] += coef * v[i];
    }
  };
  for (std::size_t l = 1; l <= k_; ++l) {
    if (alpha[k_ - l] != 0.0) accumulate(-alpha[k_ - l], out.state(j - l));
  }
  if (need_drift_) {
    for (std::size_t l = 1; l <= k_; ++l) {
      if (beta[k_ - l] == 0.0) continue;
      accumulate(h * beta[k_ - l],
                 std::span<const double>(f_hist_).subspan(((j - l) % k_) * m_, m_));
    }
  }
  for (std::size_t l = 1; l <= k_; ++l) {
    if (gamma[k_ - l] == 0.0) continue;
    const auto g = std::span<const double>(g_hist_).subspan(((j - l) % k_) * m_ * d_, m_ * d_);
    apply_diffusion(g, inc.increment(j - l + 1), m_, gdw_);
    accumulate(gamma[k_ - l], gdw_);
  }
  if (first) std::fill(rhs_.begin(), rhs_.end(), 0.0);
  if (coeffs_.implicit()) {
    solver_->solve(coeffs_.leading_beta(), h, rhs_,
                  newton_guess(solver_->config(), out.state(j - 1), rhs_), out.state(j), j);
  } else {
    std::copy(rhs_.begin(), rhs_.end(), out.state(j).begin());
  }
}

void Integrator::run(const IncrementTable& increments, std::span<const double> x0,
                     GridFunction& out) {
  if (increments.noise_dim() != d_) throw ArgumentError("integrate: increments have wrong noise dimension");
  if (!(out.grid() == increments.grid()) || out.state_dim() != m_) {
    throw ArgumentError("integrate: output grid does not match the increments");
  }
  if (x0.size() != m_) throw ArgumentError("integrate: initial value has wrong dimension");
  const std::size_t n = increments.grid().steps();
  const double h = increments.grid().step();
  const bool bem_start = k_ >= 2 && init_.second == SecondValue::bem_step;
  if (coeffs_.implicit()) StepGuard::for_scheme(*model_, coeffs_).check(h, opts_.override_step_guard);
  if (bem_start) {
    StepGuard::for_scheme(*model_, SchemeCoefficients::backward_euler())
        .check(h, opts_.override_step_guard);
  }
  if (k_ > n) throw ArgumentError("integrate: fewer steps than the scheme order");

  std::copy(x0.begin(), x0.end(), out.state(0).begin());
  auto blow_up_from = [&](std::size_t j) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t r = j; r <= n; ++r) std::fill(out.state(r).begin(), out.state(r).end(), nan);
  };
  if (!all_finite(out.state(0))) return blow_up_from(0);
  record_history(0, out);
  for (std::size_t j = 1; j < k_; ++j) {
    if (bem_start) {
      bem_start_step(j, increments, out);
    } else {
      std::copy(x0.begin(), x0.end(), out.state(j).begin());
    }
    if (!all_finite(out.state(j))) return blow_up_from(j);
    record_history(j, out);
  }
  for (std::size_t j = k_; j <= n; ++j) {
    lmm_step(j, increments, out);
    if (!all_finite(out.state(j))) return blow_up_from(j);
    record_history(j, out);
  }
}

GridFunction Integrator::run(const IncrementTable& increments, std::span<const double> x0) {
  GridFunction out(increments.grid(), m_);
  run(increments, x0, out);
  return out;
}

GridFunction integrate(const SdeModel& model, const SchemeCoefficients& coeffs,
                       const ImplicitSolverConfig& cfg, const InitialValuePolicy& init,
                       const TimeGrid& grid, const IncrementTable& increments,
                       std::span<const double> x0, IntegrateOptions opts) {
  if (!(increments.grid() == grid)) throw ArgumentError("integrate: increments are on another grid");
  Integrator integrator(model, coeffs, cfg, init, opts);
  return integrator.run(increments, x0);
}

}  // namespace bdfsde
