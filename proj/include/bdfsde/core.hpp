#pragma once

// Domain types shared by every part of the library: time grids, model
// coefficients, multistep scheme coefficients and discrete trajectories.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bdfsde {

/// Bad shapes, out-of-range parameters, inconsistent configurations.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A solver mode was requested that the model cannot support.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The Newton matrix I - h*beta*Jf became singular.
class SolverSingularError : public std::runtime_error {
 public:
  SolverSingularError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  /// Index j of the grid state that could not be computed.
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

using StateVector = std::vector<double>;

/// Equidistant grid t_j = j*h on [0, T] with N steps.
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps);

  double horizon() const noexcept { return horizon_; }
  std::size_t steps() const noexcept { return steps_; }
  double step() const noexcept { return step_; }
  double time(std::size_t j) const noexcept { return static_cast<double>(j) * step_; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  std::size_t steps_;
  double step_;
};

/// Row-major m x d matrix of diffusion coefficients.
struct DiffusionMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;

  DiffusionMatrix() = default;
  DiffusionMatrix(std::size_t m, std::size_t d) : rows(m), cols(d), entries(m * d, 0.0) {}

  double& operator()(std::size_t i, std::size_t c) { return entries[i * cols + c]; }
  double operator()(std::size_t i, std::size_t c) const { return entries[i * cols + c]; }

  /// sqrt(Tr(S^T S)).
  double hilbert_schmidt_norm() const;
};

/// Constants under which the drift/diffusion pair satisfies the global
/// monotonicity, local Lipschitz and coercivity conditions.
struct ConditionConstants {
  double L = 1.0;
  double eta = 1.0;
  double q = 1.0;
};

/// Coefficients of dX = f(X) dt + g(X) dW in R^m driven by a d-dimensional
/// Wiener process. All callbacks write into caller-provided storage so that
/// stepping loops never allocate.
struct SdeModel {
  using Drift = std::function<void(std::span<const double> x, std::span<double> out)>;
  /// Writes g(x) row-major (m x d).
  using Diffusion = std::function<void(std::span<const double> x, std::span<double> out)>;
  /// Writes Jf(x) row-major (m x m).
  using DriftJacobian = std::function<void(std::span<const double> x, std::span<double> out)>;
  /// Solves x - h*beta*f(x) = rhs.
  using ClosedFormImplicit =
      std::function<void(double beta, double h, std::span<const double> rhs, std::span<double> out)>;

  std::string name;
  std::size_t state_dim = 1;
  std::size_t noise_dim = 1;
  Drift drift;
  Diffusion diffusion;
  DriftJacobian drift_jacobian;            // optional
  ClosedFormImplicit closed_form_implicit;  // optional
  ConditionConstants constants;

  bool has_jacobian() const noexcept { return static_cast<bool>(drift_jacobian); }
  bool has_closed_form() const noexcept { return static_cast<bool>(closed_form_implicit); }

  // Allocating conveniences for tests and diagnostics.
  StateVector eval_drift(std::span<const double> x) const;
  DiffusionMatrix eval_diffusion(std::span<const double> x) const;
  std::vector<double> eval_jacobian(std::span<const double> x) const;
};

/// (alpha, beta, gamma) of the k-step recursion
///   sum_l alpha_{k-l} U^{j-l} = h sum_l beta_{k-l} f(U^{j-l})
///                              + sum_{l>=1} gamma_{k-l} g(U^{j-l}) dW^{j-l+1}
/// normalised to alpha_k = 1.
class SchemeCoefficients {
 public:
  SchemeCoefficients(std::vector<double> alpha, std::vector<double> beta, std::vector<double> gamma,
                     std::string name = "lmm");

  static SchemeCoefficients explicit_euler();
  static SchemeCoefficients backward_euler();
  static SchemeCoefficients bdf2();

  std::size_t order() const noexcept { return gamma_.size(); }
  std::span<const double> alpha() const noexcept { return alpha_; }
  std::span<const double> beta() const noexcept { return beta_; }
  std::span<const double> gamma() const noexcept { return gamma_; }
  double leading_beta() const noexcept { return beta_.back(); }
  bool implicit() const noexcept { return beta_.back() > 0.0; }
  const std::string& name() const noexcept { return name_; }

  /// True if any beta_l with l < k is non-zero, i.e. past drift values are needed.
  bool uses_drift_history() const noexcept;

 private:
  std::vector<double> alpha_;
  std::vector<double> beta_;
  std::vector<double> gamma_;
  std::string name_;
};

/// A discrete trajectory (X^0, ..., X^N) stored contiguously.
class GridFunction {
 public:
  GridFunction(TimeGrid grid, std::size_t state_dim);

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t state_dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return grid_.steps() + 1; }

  std::span<double> state(std::size_t j) noexcept { return {data_.data() + j * dim_, dim_}; }
  std::span<const double> state(std::size_t j) const noexcept {
    return {data_.data() + j * dim_, dim_};
  }
  std::span<const double> flat() const noexcept { return data_; }
  std::span<double> flat() noexcept { return data_; }

  /// Samples a continuous-time path at the grid points.
  static GridFunction restrict(const TimeGrid& grid, std::size_t state_dim,
                               const std::function<StateVector(double)>& path);

 private:
  TimeGrid grid_;
  std::size_t dim_;
  std::vector<double> data_;
};

/// Both sides of 2(u2 - u1, u2) = |u2|^2 - |u1|^2 + |u2 - u1|^2.
std::pair<double, double> gstability_identity_one(std::span<const double> u1,
                                                  std::span<const double> u2);

/// Both sides of the two-step energy identity
///   4(3/2 u3 - 2 u2 + 1/2 u1, u3)
///     = |u3|^2 - |u2|^2 + |2u3 - u2|^2 - |2u2 - u1|^2 + |u3 - 2u2 + u1|^2.
std::pair<double, double> gstability_identity_two(std::span<const double> u1,
                                                  std::span<const double> u2,
                                                  std::span<const double> u3);

/// True iff every entry is finite. Non-finite states mark an exploded sample.
bool all_finite(std::span<const double> x) noexcept;

}  // namespace bdfsde
