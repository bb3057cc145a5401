#pragma once

// Concrete test equations and a sampling checker for the monotonicity,
// coercivity and local Lipschitz conditions.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bdfsde/core.hpp"

namespace bdfsde {

/// dX = (X - lambda X|X|) dt + sigma |X|^{3/2} dW, scalar.
struct ThreeHalvesVol {
  double lambda = 4.0;
  double sigma = 0.0;

  /// lambda >= (5/2) sigma^2.
  bool in_theory() const noexcept { return lambda >= 2.5 * sigma * sigma; }

  /// L = 1, q = 2 and eta at the midpoint of (1/2, lambda/(2 sigma^2)); eta = 1
  /// when sigma = 0. Outside the admissible range eta is 1/2.
  ConditionConstants constants() const noexcept;

  /// Constant for the local Lipschitz bound on f with q = 2.
  double lipschitz_constant() const noexcept { return lambda > 1.0 ? lambda : 1.0; }

  SdeModel to_model() const;
};

struct Eval32Vol {
  double f;
  double g;
  double jf;
};

Eval32Vol eval_32vol(const ThreeHalvesVol& model, double x) noexcept;

/// Two-mode caricature of a stiff Galerkin system:
///   dX + A X dt = (X - X^3) dt + sigma diag(X^2) dW,
///   A = 1/2 [[1+lambda, 1-lambda], [1-lambda, 1+lambda]].
/// The library drift is the total f(x) - A x.
struct ToySpde2D {
  double lambda = 96.0;
  double sigma = 0.0;

  /// sigma < sqrt(2)/3.
  bool in_theory() const noexcept;

  /// L = 1, q = 3, eta = 1/(2 sigma^2) (eta = 1 when sigma = 0).
  ConditionConstants constants() const noexcept;

  /// ||I|| + max row sum of A + 3/2 from the cubic term, with q = 3.
  double lipschitz_constant() const noexcept;

  std::array<double, 4> matrix() const noexcept;

  SdeModel to_model() const;
};

struct EvalToy2D {
  std::array<double, 2> f;   // total drift
  std::array<double, 4> g;   // row-major diffusion
  std::array<double, 4> jf;  // row-major Jacobian of the total drift
};

EvalToy2D eval_toy2d(const ToySpde2D& model, std::array<double, 2> x) noexcept;

/// dX = a X dt + sigma X dW in R^1. Used for closed-form checks.
struct LinearScalar {
  double a = -1.0;
  double sigma = 0.0;

  SdeModel to_model() const;
};

enum class Condition { monotonicity, coercivity, local_lipschitz_f };

std::string to_string(Condition c);

struct Violation {
  StateVector x1;
  StateVector x2;  // empty for single-point conditions
  double lhs;
  double rhs;
};

struct ConditionReport {
  Condition condition;
  std::size_t pairs_tested = 0;
  std::size_t violation_count = 0;
  /// Violations found by the deterministic grid pass (subset of violation_count).
  std::size_t grid_violations = 0;
  /// First violations encountered, at most kMaxRecorded.
  std::vector<Violation> violations;
  /// Smallest rhs - lhs seen; differences within rounding count as zero.
  double worst_slack = 0.0;

  static constexpr std::size_t kMaxRecorded = 64;

  bool clean() const noexcept { return violation_count == 0; }
};

/// (f(x1)-f(x2), x1-x2) + eta |g(x1)-g(x2)|_HS^2 <= L |x1-x2|^2 over a grid
/// pass on [-r, r]^m and n_pairs uniform random pairs.
ConditionReport check_monotonicity(const SdeModel& model, double eta, double L, double box_radius,
                                   std::size_t n_pairs, std::uint64_t seed);

/// (f(x), x) + (4q-3)/2 |g(x)|_HS^2 <= L (1 + |x|^2).
ConditionReport check_coercivity(const SdeModel& model, double L, double q, double box_radius,
                                 std::size_t n_points, std::uint64_t seed);

/// |f(x1) - f(x2)| <= L (1 + |x1|^{q-1} + |x2|^{q-1}) |x1 - x2|.
ConditionReport check_local_lipschitz_f(const SdeModel& model, double L, double q,
                                        double box_radius, std::size_t n_pairs,
                                        std::uint64_t seed);

}  // namespace bdfsde
