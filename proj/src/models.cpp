#include "bdfsde/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bdfsde/schemes.hpp"

namespace bdfsde {

// ---------------------------------------------------------------------------
// 3/2-volatility

ConditionConstants ThreeHalvesVol::constants() const noexcept {
  ConditionConstants c{1.0, 1.0, 2.0};
  if (sigma != 0.0) {
    const double upper = lambda / (2.0 * sigma * sigma);
    c.eta = upper > 0.5 ? 0.5 * (0.5 + upper) : 0.5;
  }
  return c;
}

Eval32Vol eval_32vol(const ThreeHalvesVol& model, double x) noexcept {
  const double ax = std::abs(x);
  return {x - model.lambda * x * ax, model.sigma * ax * std::sqrt(ax),
          1.0 - 2.0 * model.lambda * ax};
}

SdeModel ThreeHalvesVol::to_model() const {
  const ThreeHalvesVol p = *this;
  SdeModel m;
  m.name = "vol32";
  m.state_dim = 1;
  m.noise_dim = 1;
  m.drift = [p](std::span<const double> x, std::span<double> out) {
    out[0] = x[0] - p.lambda * x[0] * std::abs(x[0]);
  };
  m.diffusion = [p](std::span<const double> x, std::span<double> out) {
    const double ax = std::abs(x[0]);
    out[0] = p.sigma * ax * std::sqrt(ax);
  };
  m.drift_jacobian = [p](std::span<const double> x, std::span<double> out) {
    out[0] = 1.0 - 2.0 * p.lambda * std::abs(x[0]);
  };
  m.closed_form_implicit = [p](double beta, double h, std::span<const double> rhs,
                               std::span<double> out) {
    out[0] = closed_form_32vol(p.lambda, p.sigma, beta, h, rhs[0]);
  };
  m.constants = constants();
  return m;
}

// ---------------------------------------------------------------------------
// Two-dimensional toy SPDE

bool ToySpde2D::in_theory() const noexcept { return sigma < std::sqrt(2.0) / 3.0; }

ConditionConstants ToySpde2D::constants() const noexcept {
  return {1.0, sigma != 0.0 ? 1.0 / (2.0 * sigma * sigma) : 1.0, 3.0};
}

double ToySpde2D::lipschitz_constant() const noexcept {
  const double row_sum = 0.5 * (std::abs(1.0 + lambda) + std::abs(1.0 - lambda));
  return 1.0 + row_sum + 1.5;
}

std::array<double, 4> ToySpde2D::matrix() const noexcept {
  const double d = 0.5 * (1.0 + lambda);
  const double o = 0.5 * (1.0 - lambda);
  return {d, o, o, d};
}

EvalToy2D eval_toy2d(const ToySpde2D& model, std::array<double, 2> x) noexcept {
  const auto a = model.matrix();
  EvalToy2D e{};
  e.f[0] = x[0] - x[0] * x[0] * x[0] - (a[0] * x[0] + a[1] * x[1]);
  e.f[1] = x[1] - x[1] * x[1] * x[1] - (a[2] * x[0] + a[3] * x[1]);
  e.g = {model.sigma * x[0] * x[0], 0.0, 0.0, model.sigma * x[1] * x[1]};
  e.jf = {1.0 - 3.0 * x[0] * x[0] - a[0], -a[1], -a[2], 1.0 - 3.0 * x[1] * x[1] - a[3]};
  return e;
}

SdeModel ToySpde2D::to_model() const {
  const ToySpde2D p = *this;
  SdeModel m;
  m.name = "toy2d";
  m.state_dim = 2;
  m.noise_dim = 2;
  m.drift = [p](std::span<const double> x, std::span<double> out) {
    const auto e = eval_toy2d(p, {x[0], x[1]});
    out[0] = e.f[0];
    out[1] = e.f[1];
  };
  m.diffusion = [p](std::span<const double> x, std::span<double> out) {
    out[0] = p.sigma * x[0] * x[0];
    out[1] = 0.0;
    out[2] = 0.0;
    out[3] = p.sigma * x[1] * x[1];
  };
  m.drift_jacobian = [p](std::span<const double> x, std::span<double> out) {
    const auto e = eval_toy2d(p, {x[0], x[1]});
    std::copy(e.jf.begin(), e.jf.end(), out.begin());
  };
  m.constants = constants();
  return m;
}

// ---------------------------------------------------------------------------
// Linear scalar test equation

SdeModel LinearScalar::to_model() const {
  const LinearScalar p = *this;
  SdeModel m;
  m.name = "linear";
  m.drift = [p](std::span<const double> x, std::span<double> out) { out[0] = p.a * x[0]; };
  m.diffusion = [p](std::span<const double> x, std::span<double> out) { out[0] = p.sigma * x[0]; };
  m.drift_jacobian = [p](std::span<const double>, std::span<double> out) { out[0] = p.a; };
  m.closed_form_implicit = [p](double beta, double h, std::span<const double> rhs,
                               std::span<double> out) { out[0] = rhs[0] / (1.0 - h * beta * p.a); };
  // eta = 1, q = 1: both conditions hold once L >= a + sigma^2.
  m.constants = {std::max(p.a + p.sigma * p.sigma, 1.0), 1.0, 1.0};
  return m;
}

// ---------------------------------------------------------------------------
// Condition checker

std::string to_string(Condition c) {
  switch (c) {
    case Condition::monotonicity: return "monotonicity";
    case Condition::coercivity: return "coercivity";
    case Condition::local_lipschitz_f: return "lipschitz";
  }
  return "unknown";
}

namespace {

struct Workspace {
  explicit Workspace(const SdeModel& model)
      : f1(model.state_dim), f2(model.state_dim), g1(model.state_dim * model.noise_dim),
        g2(model.state_dim * model.noise_dim) {}
  std::vector<double> f1, f2, g1, g2;
};

double sq(double v) { return v * v; }

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

class ReportBuilder {
 public:
  explicit ReportBuilder(Condition c) { report_.condition = c; }

  void add(std::span<const double> x1, std::span<const double> x2, double lhs, double rhs,
           bool from_grid) {
    ++report_.pairs_tested;
    const double tol = 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)});
    double slack = rhs - lhs;
    if (slack >= -tol) {
      slack = std::max(slack, 0.0);
    } else {
      ++report_.violation_count;
      if (from_grid) ++report_.grid_violations;
      if (report_.violations.size() < ConditionReport::kMaxRecorded) {
        report_.violations.push_back(
            {StateVector(x1.begin(), x1.end()), StateVector(x2.begin(), x2.end()), lhs, rhs});
      }
    }
    report_.worst_slack = std::min(report_.worst_slack, slack);
  }

  ConditionReport take() { return std::move(report_); }

 private:
  ConditionReport report_;
};

// Points per axis for the grid pass: odd so that 0 is included, with at most
// ~5e4 grid tuples in total.
std::size_t grid_points_per_axis(std::size_t coords) {
  std::size_t p = static_cast<std::size_t>(std::floor(std::pow(5.0e4, 1.0 / coords)));
  p = std::min<std::size_t>(p, 2001);
  if (p % 2 == 0) --p;
  return std::max<std::size_t>(p, 3);
}

// Visits every tuple of `coords` coordinates on the uniform grid over [-r, r],
// then n_random uniform tuples. `visit(tuple, from_grid)`.
template <class Visit>
void sample_box(std::size_t coords, double r, std::size_t n_random, std::uint64_t seed,
                Visit&& visit) {
  std::vector<double> t(coords);
  const std::size_t p = grid_points_per_axis(coords);
  const double step = 2.0 * r / static_cast<double>(p - 1);
  std::size_t total = 1;
  for (std::size_t c = 0; c < coords; ++c) total *= p;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t c = 0; c < coords; ++c) {
      t[c] = -r + step * static_cast<double>(rem % p);
      rem /= p;
    }
    visit(std::span<const double>(t), true);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-r, r);
  for (std::size_t n = 0; n < n_random; ++n) {
    for (double& v : t) v = u(rng);
    visit(std::span<const double>(t), false);
  }
}

void validate_box(double box_radius, std::size_t n) {
  if (!(box_radius > 0.0)) throw ArgumentError("condition check: box radius must be positive");
  if (n == 0) throw ArgumentError("condition check: need at least one sample");
}

}  // namespace

ConditionReport check_monotonicity(const SdeModel& model, double eta, double L, double box_radius,
                                   std::size_t n_pairs, std::uint64_t seed) {
  validate_box(box_radius, n_pairs);
  if (!(eta > 0.5)) throw ArgumentError("monotonicity check requires eta > 1/2");
  const std::size_t m = model.state_dim;
  Workspace w(model);
  ReportBuilder out(Condition::monotonicity);
  sample_box(2 * m, box_radius, n_pairs, seed, [&](std::span<const double> t, bool grid) {
    const auto x1 = t.first(m);
    const auto x2 = t.subspan(m, m);
    model.drift(x1, w.f1);
    model.drift(x2, w.f2);
    model.diffusion(x1, w.g1);
    model.diffusion(x2, w.g2);
    double inner = 0.0, dist = 0.0, gdiff = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      inner += (w.f1[i] - w.f2[i]) * (x1[i] - x2[i]);
      dist += sq(x1[i] - x2[i]);
    }
    for (std::size_t k = 0; k < w.g1.size(); ++k) gdiff += sq(w.g1[k] - w.g2[k]);
    out.add(x1, x2, inner + eta * gdiff, L * dist, grid);
  });
  return out.take();
}

ConditionReport check_coercivity(const SdeModel& model, double L, double q, double box_radius,
                                 std::size_t n_points, std::uint64_t seed) {
  validate_box(box_radius, n_points);
  const std::size_t m = model.state_dim;
  const double weight = (4.0 * q - 3.0) / 2.0;
  Workspace w(model);
  ReportBuilder out(Condition::coercivity);
  sample_box(m, box_radius, n_points, seed, [&](std::span<const double> x, bool grid) {
    model.drift(x, w.f1);
    model.diffusion(x, w.g1);
    double inner = 0.0;
    for (std::size_t i = 0; i < m; ++i) inner += w.f1[i] * x[i];
    out.add(x, {}, inner + weight * norm2(w.g1), L * (1.0 + norm2(x)), grid);
  });
  return out.take();
}

ConditionReport check_local_lipschitz_f(const SdeModel& model, double L, double q,
                                        double box_radius, std::size_t n_pairs,
                                        std::uint64_t seed) {
  validate_box(box_radius, n_pairs);
  const std::size_t m = model.state_dim;
  Workspace w(model);
  ReportBuilder out(Condition::local_lipschitz_f);
  sample_box(2 * m, box_radius, n_pairs, seed, [&](std::span<const double> t, bool grid) {
    const auto x1 = t.first(m);
    const auto x2 = t.subspan(m, m);
    model.drift(x1, w.f1);
    model.drift(x2, w.f2);
    double df = 0.0, dx = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      df += sq(w.f1[i] - w.f2[i]);
      dx += sq(x1[i] - x2[i]);
    }
    const double growth =
        1.0 + std::pow(std::sqrt(norm2(x1)), q - 1.0) + std::pow(std::sqrt(norm2(x2)), q - 1.0);
    out.add(x1, x2, std::sqrt(df), L * growth * std::sqrt(dx), grid);
  });
  return out.take();
}

}  // namespace bdfsde
