#include "bdfsde/core.hpp"

#include <cmath>
#include <limits>

#include "bdfsde/kernels.hpp"

namespace bdfsde {

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps), step_(0.0) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ArgumentError("time grid: horizon must be positive and finite");
  }
  if (steps == 0) throw ArgumentError("time grid: at least one step required");
  step_ = horizon / static_cast<double>(steps);
}

double DiffusionMatrix::hilbert_schmidt_norm() const {
  const auto& k = kernels::active();
  return std::sqrt(k.dot(entries.data(), entries.data(), entries.size()));
}

StateVector SdeModel::eval_drift(std::span<const double> x) const {
  if (x.size() != state_dim) throw ArgumentError("drift: state has wrong dimension");
  StateVector out(state_dim);
  drift(x, out);
  return out;
}

DiffusionMatrix SdeModel::eval_diffusion(std::span<const double> x) const {
  if (x.size() != state_dim) throw ArgumentError("diffusion: state has wrong dimension");
  DiffusionMatrix g(state_dim, noise_dim);
  diffusion(x, g.entries);
  return g;
}

std::vector<double> SdeModel::eval_jacobian(std::span<const double> x) const {
  if (!drift_jacobian) throw ConfigurationError(name + ": model has no drift Jacobian");
  if (x.size() != state_dim) throw ArgumentError("jacobian: state has wrong dimension");
  std::vector<double> out(state_dim * state_dim);
  drift_jacobian(x, out);
  return out;
}

SchemeCoefficients::SchemeCoefficients(std::vector<double> alpha, std::vector<double> beta,
                                       std::vector<double> gamma, std::string name)
    : alpha_(std::move(alpha)), beta_(std::move(beta)), gamma_(std::move(gamma)),
      name_(std::move(name)) {
  const std::size_t k = gamma_.size();
  if (k == 0) throw ArgumentError("scheme coefficients: order must be at least 1");
  if (alpha_.size() != k + 1 || beta_.size() != k + 1) {
    throw ArgumentError("scheme coefficients: alpha and beta need k+1 entries");
  }
  if (alpha_.back() != 1.0) throw ArgumentError("scheme coefficients: alpha_k must equal 1");
  if (beta_.back() < 0.0) throw ArgumentError("scheme coefficients: beta_k must be non-negative");
}

SchemeCoefficients SchemeCoefficients::explicit_euler() {
  return {{-1.0, 1.0}, {1.0, 0.0}, {1.0}, "eulm"};
}

SchemeCoefficients SchemeCoefficients::backward_euler() {
  return {{-1.0, 1.0}, {0.0, 1.0}, {1.0}, "bem"};
}

SchemeCoefficients SchemeCoefficients::bdf2() {
  // (1/2, -2, 3/2 | 0, 0, 1 | -1/2, 3/2) divided by 3/2.
  const double s = 1.5;
  return {{0.5 / s, -2.0 / s, 1.0}, {0.0, 0.0, 1.0 / s}, {-0.5 / s, 1.5 / s}, "bdf2"};
}

bool SchemeCoefficients::uses_drift_history() const noexcept {
  for (std::size_t l = 0; l + 1 < beta_.size(); ++l) {
    if (beta_[l] != 0.0) return true;
  }
  return false;
}

GridFunction::GridFunction(TimeGrid grid, std::size_t state_dim)
    : grid_(grid), dim_(state_dim), data_((grid.steps() + 1) * state_dim, 0.0) {
  if (state_dim == 0) throw ArgumentError("grid function: state dimension must be positive");
}

GridFunction GridFunction::restrict(const TimeGrid& grid, std::size_t state_dim,
                                    const std::function<StateVector(double)>& path) {
  GridFunction out(grid, state_dim);
  for (std::size_t j = 0; j <= grid.steps(); ++j) {
    const StateVector x = path(grid.time(j));
    if (x.size() != state_dim) throw ArgumentError("restrict: path returned wrong dimension");
    std::copy(x.begin(), x.end(), out.state(j).begin());
  }
  return out;
}

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double inner(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::pair<double, double> gstability_identity_one(std::span<const double> u1,
                                                  std::span<const double> u2) {
  if (u1.size() != u2.size()) throw ArgumentError("gstability_identity_one: dimension mismatch");
  StateVector diff(u1.size());
  for (std::size_t i = 0; i < u1.size(); ++i) diff[i] = u2[i] - u1[i];
  const double lhs = 2.0 * inner(diff, u2);
  const double rhs = norm2(u2) - norm2(u1) + norm2(diff);
  return {lhs, rhs};
}

std::pair<double, double> gstability_identity_two(std::span<const double> u1,
                                                  std::span<const double> u2,
                                                  std::span<const double> u3) {
  if (u1.size() != u2.size() || u2.size() != u3.size()) {
    throw ArgumentError("gstability_identity_two: dimension mismatch");
  }
  const std::size_t m = u1.size();
  StateVector bdf(m), a(m), b(m), c(m);
  for (std::size_t i = 0; i < m; ++i) {
    bdf[i] = 1.5 * u3[i] - 2.0 * u2[i] + 0.5 * u1[i];
    a[i] = 2.0 * u3[i] - u2[i];
    b[i] = 2.0 * u2[i] - u1[i];
    c[i] = u3[i] - 2.0 * u2[i] + u1[i];
  }
  const double lhs = 4.0 * inner(bdf, u3);
  const double rhs = norm2(u3) - norm2(u2) + norm2(a) - norm2(b) + norm2(c);
  return {lhs, rhs};
}

bool all_finite(std::span<const double> x) noexcept {
  return kernels::active().count_nonfinite(x.data(), x.size()) == 0;
}

}  // namespace bdfsde
