#pragma once

// Monte Carlo strong-error studies against a coupled fine-grid reference,
// experimental orders of convergence, residual diagnostics and CSV output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bdfsde/brownian.hpp"
#include "bdfsde/core.hpp"
#include "bdfsde/models.hpp"
#include "bdfsde/schemes.hpp"

namespace bdfsde {

enum class ModelKind { vol32, toy2d, linear };

struct ModelSpec {
  ModelKind kind = ModelKind::vol32;
  double lambda = 4.0;
  double sigma = 0.0;
  /// Drift coefficient for ModelKind::linear.
  double linear_a = -1.0;

  SdeModel build() const;
  /// 1 for the scalar models, (2, 3) for toy2d.
  StateVector default_x0() const;
  bool in_theory() const;
};

enum class SchemeKind { eulm, bem, bdf2 };

SchemeCoefficients coefficients(SchemeKind s);
std::string to_string(SchemeKind s);
SchemeKind parse_scheme(const std::string& name);
ModelKind parse_model(const std::string& name);

/// {25 * 2^k : k = 0..7}.
std::vector<std::size_t> default_levels();

struct ExperimentConfig {
  ModelSpec model;
  std::vector<SchemeKind> schemes{SchemeKind::eulm, SchemeKind::bem, SchemeKind::bdf2};
  double horizon = 1.0;
  std::optional<StateVector> x0;
  std::vector<std::size_t> levels = default_levels();
  std::size_t samples = 10000;
  std::size_t ref_steps = 25 * 4096;
  SchemeKind reference = SchemeKind::bdf2;
  std::uint64_t base_seed = 0;
  unsigned threads = 1;
  /// Second starting value for the schemes under test. The reference always
  /// starts with one backward Euler step.
  InitialValuePolicy init;
  ImplicitSolverConfig solver;
  bool override_step_guard = false;

  /// Throws ArgumentError on inconsistent settings (e.g. ref_steps not a
  /// multiple of every level).
  void validate() const;
  StateVector initial_state() const;
};

struct ErrorCell {
  /// Empty when the cell is exploded.
  std::optional<double> error;
  std::optional<double> eoc;
  std::size_t exploded_samples = 0;
};

struct ErrorRow {
  std::size_t steps;
  double h;
  std::vector<ErrorCell> cells;  // parallel to ErrorTable::schemes
};

struct ErrorTable {
  std::vector<SchemeKind> schemes;
  std::vector<ErrorRow> rows;
  std::size_t samples = 0;

  const ErrorCell& cell(std::size_t row, SchemeKind s) const;
};

/// A cell is rendered exploded when at least this fraction of samples blew up.
inline constexpr double kExplodedFraction = 1e-3;

/// Log-log slope between two consecutive levels; empty unless both errors
/// are positive and finite.
std::optional<double> eoc(double error_prev, double error_cur, double h_prev, double h_cur);

/// |1 - lambda h| < 1.
bool cfl_indicator(double lambda, double h);

/// Runs the full study: one fine increment table and reference path per
/// sample, every level and scheme integrated on coarsened increments.
/// Deterministic in (base_seed, samples, levels) for any thread count.
ErrorTable run_convergence_study(const ExperimentConfig& config);

struct StrongError {
  /// Empty when exploded.
  std::optional<double> error;
  std::size_t exploded = 0;
};

/// Strong error of one scheme at one level against precomputed per-sample
/// fine increments and reference trajectories (same order, same noise).
StrongError strong_error(const ExperimentConfig& config, SchemeKind scheme, std::size_t level,
                         std::span<const IncrementTable> fine_increments,
                         std::span<const GridFunction> references);

/// Fine increments and reference trajectory for one sample.
std::pair<IncrementTable, GridFunction> reference_sample(const ExperimentConfig& config,
                                                         std::size_t sample_index);

struct ResidualRow {
  std::size_t steps;
  double h;
  double bem_max;     // max_j || varrho^j ||
  double rho1_max;    // max_j || rho_1^j ||
  double rho23_max;   // max_j || rho_2^j + rho_3^j ||, j >= 2
  std::optional<double> bem_ratio;    // previous level / this level
  std::optional<double> rho1_ratio;
  std::optional<double> rho23_ratio;
};

struct ResidualReport {
  std::vector<ResidualRow> rows;
  std::size_t samples = 0;
};

/// Monte Carlo L2 norms of the one- and two-step residuals of the reference
/// path restricted to each level's grid.
ResidualReport estimate_residuals(const ExperimentConfig& config, std::size_t samples);

std::string format_csv(const ErrorTable& table);
void write_csv(const ErrorTable& table, const std::filesystem::path& path);

std::string format_residual_csv(const ResidualReport& report);

/// One trajectory on `steps` steps driven by sample `sample_index` of the seed.
GridFunction simulate(const ModelSpec& model, SchemeKind scheme, const ExperimentConfig& config,
                      std::size_t steps, std::size_t sample_index = 0);

std::string format_trajectory_csv(const GridFunction& path);

/// Writes `text` to `path`, surfacing I/O failures with the path.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace bdfsde
