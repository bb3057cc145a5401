#include "bdfsde/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "bdfsde/kernels.hpp"

namespace bdfsde {

// ---------------------------------------------------------------------------
// Configuration

SdeModel ModelSpec::build() const {
  switch (kind) {
    case ModelKind::vol32: return ThreeHalvesVol{lambda, sigma}.to_model();
    case ModelKind::toy2d: return ToySpde2D{lambda, sigma}.to_model();
    case ModelKind::linear: return LinearScalar{linear_a, sigma}.to_model();
  }
  throw ArgumentError("unknown model");
}

StateVector ModelSpec::default_x0() const {
  if (kind == ModelKind::toy2d) return {2.0, 3.0};
  return {1.0};
}

bool ModelSpec::in_theory() const {
  switch (kind) {
    case ModelKind::vol32: return ThreeHalvesVol{lambda, sigma}.in_theory();
    case ModelKind::toy2d: return ToySpde2D{lambda, sigma}.in_theory();
    case ModelKind::linear: return true;
  }
  return false;
}

SchemeCoefficients coefficients(SchemeKind s) {
  switch (s) {
    case SchemeKind::eulm: return SchemeCoefficients::explicit_euler();
    case SchemeKind::bem: return SchemeCoefficients::backward_euler();
    case SchemeKind::bdf2: return SchemeCoefficients::bdf2();
  }
  throw ArgumentError("unknown scheme");
}

std::string to_string(SchemeKind s) {
  switch (s) {
    case SchemeKind::eulm: return "eulm";
    case SchemeKind::bem: return "bem";
    case SchemeKind::bdf2: return "bdf2";
  }
  return "unknown";
}

SchemeKind parse_scheme(const std::string& name) {
  if (name == "eulm") return SchemeKind::eulm;
  if (name == "bem") return SchemeKind::bem;
  if (name == "bdf2") return SchemeKind::bdf2;
  throw ArgumentError("unknown scheme '" + name + "' (expected eulm, bem or bdf2)");
}

ModelKind parse_model(const std::string& name) {
  if (name == "vol32") return ModelKind::vol32;
  if (name == "toy2d") return ModelKind::toy2d;
  if (name == "linear") return ModelKind::linear;
  throw ArgumentError("unknown model '" + name + "' (expected vol32, toy2d or linear)");
}

std::vector<std::size_t> default_levels() {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k <= 7; ++k) out.push_back(25u << k);
  return out;
}

StateVector ExperimentConfig::initial_state() const { return x0.value_or(model.default_x0()); }

void ExperimentConfig::validate() const {
  if (!(horizon > 0.0)) throw ArgumentError("horizon must be positive");
  if (samples == 0) throw ArgumentError("at least one sample required");
  if (ref_steps == 0) throw ArgumentError("ref_steps must be positive");
  if (levels.empty()) throw ArgumentError("at least one level required");
  const SdeModel m = model.build();
  if (initial_state().size() != m.state_dim) throw ArgumentError("x0 has wrong dimension");
  for (std::size_t n : levels) {
    if (n == 0 || ref_steps % n != 0) {
      throw ArgumentError("ref_steps " + std::to_string(ref_steps) +
                          " is not a multiple of level " + std::to_string(n));
    }
  }
  if (!std::is_sorted(levels.begin(), levels.end())) throw ArgumentError("levels must be ascending");
  const auto guard_ok = [&](const SchemeCoefficients& c, double h) {
    if (c.implicit()) StepGuard::for_scheme(m, c).check(h, override_step_guard);
    if (c.order() >= 2) {
      StepGuard::for_scheme(m, SchemeCoefficients::backward_euler()).check(h, override_step_guard);
    }
  };
  guard_ok(coefficients(reference), horizon / static_cast<double>(ref_steps));
  for (SchemeKind s : schemes) {
    for (std::size_t n : levels) guard_ok(coefficients(s), horizon / static_cast<double>(n));
  }
}

const ErrorCell& ErrorTable::cell(std::size_t row, SchemeKind s) const {
  for (std::size_t i = 0; i < schemes.size(); ++i) {
    if (schemes[i] == s) return rows.at(row).cells.at(i);
  }
  throw ArgumentError("scheme " + to_string(s) + " not in table");
}

std::optional<double> eoc(double error_prev, double error_cur, double h_prev, double h_cur) {
  const auto usable = [](double e) { return std::isfinite(e) && e > 0.0; };
  if (!usable(error_prev) || !usable(error_cur) || !usable(h_prev) || !usable(h_cur) ||
      h_prev == h_cur) {
    return std::nullopt;
  }
  return (std::log(error_cur) - std::log(error_prev)) / (std::log(h_cur) - std::log(h_prev));
}

bool cfl_indicator(double lambda, double h) { return std::abs(1.0 - lambda * h) < 1.0; }

// ---------------------------------------------------------------------------
// Deterministic sample reduction

namespace {

/// Per-index compensated sums.
class SumArray {
 public:
  explicit SumArray(std::size_t n = 0) : sum_(n, 0.0), comp_(n, 0.0) {}

  std::size_t size() const noexcept { return sum_.size(); }

  void add(std::span<const double> v) {
    kernels::active().compensated_add(sum_.data(), comp_.data(), v.data(), sum_.size());
  }

  void merge(const SumArray& o) {
    add(o.sum_);
    for (std::size_t i = 0; i < comp_.size(); ++i) comp_[i] += o.comp_[i];
  }

  double value(std::size_t i) const { return sum_[i] + comp_[i]; }

  double max_value() const {
    double m = 0.0;
    for (std::size_t i = 0; i < sum_.size(); ++i) m = std::max(m, value(i));
    return m;
  }

 private:
  std::vector<double> sum_, comp_;
};

constexpr std::size_t kChunkSamples = 32;

// Samples are processed in fixed chunks of consecutive indices; chunk results
// are merged strictly in chunk order, so the outcome does not depend on the
// number of threads or on scheduling.
template <class Acc, class MakeAcc, class MakeWorker, class Process>
Acc reduce_samples(std::size_t samples, unsigned threads, MakeAcc make_acc, MakeWorker make_worker,
                   Process process) {
  const std::size_t chunks = (samples + kChunkSamples - 1) / kChunkSamples;
  Acc total = make_acc();
  std::atomic<std::size_t> next_chunk{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::map<std::size_t, Acc> pending;
  std::size_t next_merge = 0;
  std::exception_ptr error;

  auto body = [&] {
    try {
      auto worker = make_worker();
      while (!failed.load()) {
        const std::size_t c = next_chunk.fetch_add(1);
        if (c >= chunks) break;
        Acc acc = make_acc();
        const std::size_t end = std::min(samples, (c + 1) * kChunkSamples);
        for (std::size_t i = c * kChunkSamples; i < end; ++i) process(worker, i, acc);
        std::lock_guard lock(mu);
        pending.emplace(c, std::move(acc));
        for (auto it = pending.begin(); it != pending.end() && it->first == next_merge;
             it = pending.erase(it), ++next_merge) {
          total.merge(it->second);
        }
      }
    } catch (...) {
      std::lock_guard lock(mu);
      if (!error) error = std::current_exception();
      failed.store(true);
    }
  };

  const unsigned n_threads =
      static_cast<unsigned>(std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(chunks, 1)));
  if (n_threads == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return total;
}

struct CellAcc {
  SumArray squared;
  std::size_t used = 0;
  std::size_t exploded = 0;

  void merge(const CellAcc& o) {
    squared.merge(o.squared);
    used += o.used;
    exploded += o.exploded;
  }
};

// Cells are stored level-major: index = level * schemes + scheme.
struct StudyAcc {
  std::vector<CellAcc> cells;

  void merge(const StudyAcc& o) {
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i].merge(o.cells[i]);
  }
};

std::size_t factor_for(const ExperimentConfig& cfg, std::size_t level) {
  return cfg.ref_steps / level;
}

TimeGrid fine_grid(const ExperimentConfig& cfg) { return {cfg.horizon, cfg.ref_steps}; }

// Compares `path` against `reference` at the level's grid points and folds
// the squared deviations into `cell`.
void accumulate_deviation(const GridFunction& reference, const GridFunction& path,
                          std::size_t factor, std::vector<double>& scratch, CellAcc& cell) {
  const auto& k = kernels::active();
  const std::size_t m = path.state_dim();
  scratch.resize(path.size());
  k.squared_deviation(reference.flat().data(), factor * m, path.flat().data(), m, path.size(),
                      scratch.data());
  if (k.count_nonfinite(scratch.data(), scratch.size()) != 0) {
    ++cell.exploded;
    return;
  }
  cell.squared.add(scratch);
  ++cell.used;
}

StrongError finish_cell(const CellAcc& cell, std::size_t samples) {
  StrongError out;
  out.exploded = cell.exploded;
  const bool too_many =
      cell.exploded > 0 && static_cast<double>(cell.exploded) >= kExplodedFraction * samples;
  if (cell.used == 0 || too_many) return out;
  out.error = std::sqrt(cell.squared.max_value() / static_cast<double>(cell.used));
  return out;
}

struct StudyWorker {
  StudyWorker(const SdeModel& model, const ExperimentConfig& cfg)
      : reference(model, coefficients(cfg.reference), cfg.solver, InitialValuePolicy{},
                  IntegrateOptions{cfg.override_step_guard}),
        ref_path(fine_grid(cfg), model.state_dim) {
    for (SchemeKind s : cfg.schemes) {
      schemes.emplace_back(model, coefficients(s), cfg.solver, cfg.init,
                           IntegrateOptions{cfg.override_step_guard});
    }
    for (std::size_t n : cfg.levels) paths.emplace_back(TimeGrid(cfg.horizon, n), model.state_dim);
  }

  Integrator reference;
  std::vector<Integrator> schemes;
  GridFunction ref_path;
  std::vector<GridFunction> paths;  // one per level, reused across schemes
  std::vector<double> scratch;
};

bool run_reference(Integrator& integrator, const IncrementTable& fine, std::span<const double> x0,
                   GridFunction& out) {
  try {
    integrator.run(fine, x0, out);
  } catch (const SolverSingularError&) {
    return false;
  }
  return all_finite(out.flat());
}

}  // namespace

// ---------------------------------------------------------------------------
// Convergence study

ErrorTable run_convergence_study(const ExperimentConfig& config) {
  config.validate();
  const SdeModel model = config.model.build();
  const StateVector x0 = config.initial_state();
  const std::size_t n_schemes = config.schemes.size();
  const std::size_t n_levels = config.levels.size();

  auto make_acc = [&] {
    StudyAcc acc;
    acc.cells.reserve(n_levels * n_schemes);
    for (std::size_t li = 0; li < n_levels; ++li) {
      for (std::size_t s = 0; s < n_schemes; ++s) {
        acc.cells.push_back(CellAcc{SumArray(config.levels[li] + 1)});
      }
    }
    return acc;
  };
  auto make_worker = [&] { return StudyWorker(model, config); };
  auto process = [&](StudyWorker& w, std::size_t sample, StudyAcc& acc) {
    const IncrementTable fine =
        generate_increments(fine_grid(config), model.noise_dim, {config.base_seed, sample});
    const bool ref_ok = run_reference(w.reference, fine, x0, w.ref_path);
    for (std::size_t li = 0; li < n_levels; ++li) {
      const std::size_t factor = factor_for(config, config.levels[li]);
      const IncrementTable coarse = coarsen(fine, factor);
      for (std::size_t s = 0; s < n_schemes; ++s) {
        CellAcc& cell = acc.cells[li * n_schemes + s];
        if (!ref_ok) {
          ++cell.exploded;
          continue;
        }
        try {
          w.schemes[s].run(coarse, x0, w.paths[li]);
        } catch (const SolverSingularError&) {
          ++cell.exploded;
          continue;
        }
        accumulate_deviation(w.ref_path, w.paths[li], factor, w.scratch, cell);
      }
    }
  };
  const StudyAcc total = reduce_samples<StudyAcc>(config.samples, config.threads, make_acc,
                                                  make_worker, process);

  ErrorTable table;
  table.schemes = config.schemes;
  table.samples = config.samples;
  for (std::size_t li = 0; li < n_levels; ++li) {
    ErrorRow row{config.levels[li], config.horizon / static_cast<double>(config.levels[li]), {}};
    for (std::size_t s = 0; s < n_schemes; ++s) {
      const StrongError e = finish_cell(total.cells[li * n_schemes + s], config.samples);
      ErrorCell cell{e.error, std::nullopt, e.exploded};
      if (li > 0) {
        const ErrorCell& prev = table.rows.back().cells[s];
        if (prev.error && cell.error) {
          cell.eoc = eoc(*prev.error, *cell.error, table.rows.back().h, row.h);
        }
      }
      row.cells.push_back(cell);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::pair<IncrementTable, GridFunction> reference_sample(const ExperimentConfig& config,
                                                         std::size_t sample_index) {
  config.validate();
  const SdeModel model = config.model.build();
  IncrementTable fine =
      generate_increments(fine_grid(config), model.noise_dim, {config.base_seed, sample_index});
  Integrator ref(model, coefficients(config.reference), config.solver, InitialValuePolicy{},
                 IntegrateOptions{config.override_step_guard});
  GridFunction path = ref.run(fine, config.initial_state());
  return {std::move(fine), std::move(path)};
}

StrongError strong_error(const ExperimentConfig& config, SchemeKind scheme, std::size_t level,
                         std::span<const IncrementTable> fine_increments,
                         std::span<const GridFunction> references) {
  config.validate();
  if (fine_increments.size() != references.size()) {
    throw ArgumentError("strong_error: one reference per increment table required");
  }
  if (level == 0 || config.ref_steps % level != 0) {
    throw ArgumentError("strong_error: level does not divide the reference grid");
  }
  const SdeModel model = config.model.build();
  const StateVector x0 = config.initial_state();
  const std::size_t factor = factor_for(config, level);
  Integrator integrator(model, coefficients(scheme), config.solver, config.init,
                        IntegrateOptions{config.override_step_guard});
  GridFunction path(TimeGrid(config.horizon, level), model.state_dim);
  std::vector<double> scratch;
  CellAcc cell{SumArray(level + 1)};
  for (std::size_t i = 0; i < references.size(); ++i) {
    const GridFunction& ref = references[i];
    if (!(fine_increments[i].grid() == fine_grid(config)) || !(ref.grid() == fine_grid(config))) {
      throw ArgumentError("strong_error: reference is not on the configured fine grid");
    }
    if (!all_finite(ref.flat())) {
      ++cell.exploded;
      continue;
    }
    try {
      integrator.run(coarsen(fine_increments[i], factor), x0, path);
    } catch (const SolverSingularError&) {
      ++cell.exploded;
      continue;
    }
    accumulate_deviation(ref, path, factor, scratch, cell);
  }
  return finish_cell(cell, references.size());
}

// ---------------------------------------------------------------------------
// Residual diagnostics

namespace {

struct ResidualAcc {
  std::vector<SumArray> one_step;  // per level, j = 1..N
  std::vector<SumArray> two_step;  // per level, j = 2..N

  void merge(const ResidualAcc& o) {
    for (std::size_t i = 0; i < one_step.size(); ++i) {
      one_step[i].merge(o.one_step[i]);
      two_step[i].merge(o.two_step[i]);
    }
  }
};

struct ResidualWorker {
  ResidualWorker(const SdeModel& model, const ExperimentConfig& cfg)
      : reference(model, coefficients(cfg.reference), cfg.solver, InitialValuePolicy{},
                  IntegrateOptions{cfg.override_step_guard}),
        ref_path(fine_grid(cfg), model.state_dim) {}

  Integrator reference;
  GridFunction ref_path;
  std::vector<double> f, g, gdw_cur, gdw_prev, one, two;
};

// gdw = g(v) * dw for row-major g (m x d).
void diffusion_times(const SdeModel& model, std::span<const double> v, std::span<const double> dw,
                     std::vector<double>& g, std::span<double> gdw) {
  const std::size_t m = model.state_dim, d = model.noise_dim;
  g.resize(m * d);
  model.diffusion(v, g);
  for (std::size_t i = 0; i < m; ++i) {
    double s = g[i * d] * dw[0];
    for (std::size_t c = 1; c < d; ++c) s += g[i * d + c] * dw[c];
    gdw[i] = s;
  }
}

}  // namespace

ResidualReport estimate_residuals(const ExperimentConfig& config, std::size_t samples) {
  config.validate();
  if (samples < 100) throw ArgumentError("estimate_residuals: at least 100 samples required");
  const SdeModel model = config.model.build();
  const StateVector x0 = config.initial_state();
  const std::size_t m = model.state_dim;
  const std::size_t n_levels = config.levels.size();

  auto make_acc = [&] {
    ResidualAcc acc;
    for (std::size_t n : config.levels) {
      acc.one_step.emplace_back(n);
      acc.two_step.emplace_back(n - 1);
    }
    return acc;
  };
  auto make_worker = [&] { return ResidualWorker(model, config); };
  auto process = [&](ResidualWorker& w, std::size_t sample, ResidualAcc& acc) {
    const IncrementTable fine =
        generate_increments(fine_grid(config), model.noise_dim, {config.base_seed, sample});
    if (!run_reference(w.reference, fine, x0, w.ref_path)) {
      throw std::runtime_error("estimate_residuals: reference path exploded in sample " +
                               std::to_string(sample));
    }
    for (std::size_t li = 0; li < n_levels; ++li) {
      const std::size_t n = config.levels[li];
      const std::size_t factor = factor_for(config, n);
      const IncrementTable coarse = coarsen(fine, factor);
      const double h = coarse.grid().step();
      auto v = [&](std::size_t j) { return w.ref_path.state(j * factor); };
      w.f.resize(m);
      w.gdw_cur.resize(m);
      w.gdw_prev.resize(m);
      w.one.resize(n);
      w.two.resize(n - 1);
      std::vector<double> r1(m);
      for (std::size_t j = 1; j <= n; ++j) {
        model.drift(v(j), w.f);
        diffusion_times(model, v(j - 1), coarse.increment(j), w.g, w.gdw_cur);
        double s1 = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          r1[i] = h * w.f[i] + w.gdw_cur[i] - v(j)[i] + v(j - 1)[i];
          s1 += r1[i] * r1[i];
        }
        w.one[j - 1] = s1;
        if (j >= 2) {
          model.drift(v(j - 1), w.f);
          diffusion_times(model, v(j - 2), coarse.increment(j - 1), w.g, w.gdw_prev);
          double s2 = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            const double rho2 = 0.5 * (h * w.f[i] + w.gdw_cur[i] - v(j)[i] + v(j - 1)[i]);
            const double rho3 = -0.5 * (h * w.f[i] + w.gdw_prev[i] - v(j - 1)[i] + v(j - 2)[i]);
            s2 += (rho2 + rho3) * (rho2 + rho3);
          }
          w.two[j - 2] = s2;
        }
      }
      acc.one_step[li].add(w.one);
      acc.two_step[li].add(w.two);
    }
  };
  const ResidualAcc total =
      reduce_samples<ResidualAcc>(samples, config.threads, make_acc, make_worker, process);

  ResidualReport report;
  report.samples = samples;
  const double inv = 1.0 / static_cast<double>(samples);
  for (std::size_t li = 0; li < n_levels; ++li) {
    ResidualRow row{};
    row.steps = config.levels[li];
    row.h = config.horizon / static_cast<double>(row.steps);
    row.bem_max = std::sqrt(total.one_step[li].max_value() * inv);
    // rho_1 and the backward Euler residual are the same expression.
    row.rho1_max = row.bem_max;
    row.rho23_max = std::sqrt(total.two_step[li].max_value() * inv);
    if (li > 0) {
      const ResidualRow& prev = report.rows.back();
      const auto ratio = [](double a, double b) -> std::optional<double> {
        if (b > 0.0 && std::isfinite(a) && std::isfinite(b)) return a / b;
        return std::nullopt;
      };
      row.bem_ratio = ratio(prev.bem_max, row.bem_max);
      row.rho1_ratio = ratio(prev.rho1_max, row.rho1_max);
      row.rho23_ratio = ratio(prev.rho23_max, row.rho23_max);
    }
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string fmt_opt(const char* spec, const std::optional<double>& v, const char* missing) {
  return v ? fmt(spec, *v) : std::string(missing);
}

}  // namespace

std::string format_csv(const ErrorTable& table) {
  std::string out = "N,h";
  for (SchemeKind s : table.schemes) {
    const std::string n = to_string(s);
    out += "," + n + "_error," + n + "_eoc," + n + "_exploded";
  }
  out += '\n';
  for (const ErrorRow& row : table.rows) {
    out += std::to_string(row.steps) + "," + fmt("%.6g", row.h);
    for (const ErrorCell& c : row.cells) {
      out += "," + fmt_opt("%.6g", c.error, "-") + "," + fmt_opt("%.2f", c.eoc, "") + "," +
             std::to_string(c.exploded_samples);
    }
    out += '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void write_csv(const ErrorTable& table, const std::filesystem::path& path) {
  write_text(path, format_csv(table));
}

std::string format_residual_csv(const ResidualReport& report) {
  std::string out = "N,h,bem_max,bem_ratio,rho1_max,rho1_ratio,rho23_max,rho23_ratio\n";
  for (const ResidualRow& r : report.rows) {
    out += std::to_string(r.steps) + "," + fmt("%.6g", r.h) + "," + fmt("%.6g", r.bem_max) + "," +
           fmt_opt("%.3f", r.bem_ratio, "") + "," + fmt("%.6g", r.rho1_max) + "," +
           fmt_opt("%.3f", r.rho1_ratio, "") + "," + fmt("%.6g", r.rho23_max) + "," +
           fmt_opt("%.3f", r.rho23_ratio, "") + "\n";
  }
  return out;
}

GridFunction simulate(const ModelSpec& model_spec, SchemeKind scheme, const ExperimentConfig& config,
                      std::size_t steps, std::size_t sample_index) {
  if (steps == 0) throw ArgumentError("simulate: steps must be positive");
  const SdeModel model = model_spec.build();
  const TimeGrid grid(config.horizon, steps);
  const IncrementTable inc =
      generate_increments(grid, model.noise_dim, {config.base_seed, sample_index});
  StateVector x0 = config.x0.value_or(model_spec.default_x0());
  return integrate(model, coefficients(scheme), config.solver, config.init, grid, inc, x0,
                   IntegrateOptions{config.override_step_guard});
}

std::string format_trajectory_csv(const GridFunction& path) {
  std::string out = "t";
  for (std::size_t i = 0; i < path.state_dim(); ++i) out += ",x" + std::to_string(i + 1);
  out += '\n';
  for (std::size_t j = 0; j < path.size(); ++j) {
    out += fmt("%.17g", path.grid().time(j));
    for (double v : path.state(j)) out += "," + fmt("%.17g", v);
    out += '\n';
  }
  return out;
}

}  // namespace bdfsde
