#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sinkscale/diagnostics.hpp"
#include "sinkscale/eot.hpp"
#include "sinkscale/instance_gen.hpp"
#include "sinkscale/io.hpp"
#include "sinkscale/matrix.hpp"
#include "sinkscale/sk.hpp"

namespace sinkscale {

// ---------------------------------------------------------------------------
// Structural stability audit (row/column-sum and entry ranges along a
// (1,1)-scaling run of a dense square instance).

struct StabilityAuditRow {
  std::size_t iter = 0;
  bool audited = false;  // false while the step sits in the exceptional set
  double min_rsum = 0.0, max_rsum = 0.0, min_csum = 0.0, max_csum = 0.0;
  double max_entry_scaled = 0.0;  // max entry times n
  bool in_range = true;
  double margin = 0.0;  // smallest ratio of slack to bound across the checks
};

struct StabilityAudit {
  bool applicable = false;
  std::string note;
  double sum_lo = 0.0, sum_hi = 0.0;  // rho^2(gamma+gamma'-1)/10 and its inverse
  double entry_hi = 0.0;              // 10/(rho^2(gamma+gamma'-1) n)
  std::vector<StabilityAuditRow> rows;
  std::size_t violations = 0;
};

// Audits each step of a (1,1)-scaling trajectory against the stability
// ranges. Steps whose own or two preceding errors exceed
// (9n/10)(1 - 1/(gamma+gamma')) form the exceptional set and are skipped,
// as are steps 0 and 1.
inline StabilityAudit structural_stability_audit(const std::vector<Matrix>& states,
                                                 const DensityReport& dens) {
  StabilityAudit audit;
  const double gsum = dens.gamma + dens.gamma_prime;
  if (!(gsum > 1.0)) {
    audit.applicable = false;
    audit.note = "precondition unmet: gamma + gamma' = " + std::to_string(gsum) +
                 " is not above 1, the stability ranges do not apply";
    return audit;
  }
  if (states.empty() || states.front().rows() != states.front().cols()) {
    audit.applicable = false;
    audit.note = "precondition unmet: audit needs a square (1,1)-scaling trajectory";
    return audit;
  }
  audit.applicable = true;
  const std::size_t n = states.front().rows();
  const double nd = static_cast<double>(n);
  const double denom = dens.rho * dens.rho * (gsum - 1.0);
  audit.sum_lo = denom / 10.0;
  audit.sum_hi = 10.0 / denom;
  audit.entry_hi = 10.0 / (denom * nd);
  const double threshold = 0.9 * nd * (1.0 - 1.0 / gsum);

  const Marginals ones = Marginals::ones(n);
  std::vector<double> errors(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto [re, ce] = marginal_error_l1(states[k], ones);
    errors[k] = re + ce;
  }
  for (std::size_t k = 0; k < states.size(); ++k) {
    StabilityAuditRow row;
    row.iter = k;
    const bool exceptional =
        k < 2 || errors[k] > threshold || errors[k - 1] > threshold || errors[k - 2] > threshold;
    row.audited = !exceptional;
    const auto r = row_sums(states[k]);
    const auto c = col_sums(states[k]);
    row.min_rsum = *std::min_element(r.begin(), r.end());
    row.max_rsum = *std::max_element(r.begin(), r.end());
    row.min_csum = *std::min_element(c.begin(), c.end());
    row.max_csum = *std::max_element(c.begin(), c.end());
    row.max_entry_scaled = max_entry(states[k]) * nd;
    if (row.audited) {
      const double lo = std::min(row.min_rsum, row.min_csum);
      const double hi = std::max(row.max_rsum, row.max_csum);
      row.in_range = lo >= audit.sum_lo && hi <= audit.sum_hi &&
                     max_entry(states[k]) <= audit.entry_hi;
      row.margin = std::min({lo / audit.sum_lo, audit.sum_hi / hi,
                             audit.entry_hi / max_entry(states[k])});
      if (!row.in_range) ++audit.violations;
    }
    audit.rows.push_back(row);
  }
  return audit;
}

// ---------------------------------------------------------------------------
// Experiment driver.

enum class ExperimentId {
  OutlierIndependence,
  PrescaleAcceleration,
  PhaseTransition,
  CriticalBoundary,
  NuDependence,
};

inline const char* experiment_name(ExperimentId id) {
  switch (id) {
    case ExperimentId::OutlierIndependence: return "outlier_independence";
    case ExperimentId::PrescaleAcceleration: return "prescale_acceleration";
    case ExperimentId::PhaseTransition: return "phase_transition";
    case ExperimentId::CriticalBoundary: return "critical_boundary";
    case ExperimentId::NuDependence: return "nu_dependence";
  }
  return "unknown";
}

inline ExperimentId experiment_from_name(const std::string& name) {
  for (ExperimentId id :
       {ExperimentId::OutlierIndependence, ExperimentId::PrescaleAcceleration,
        ExperimentId::PhaseTransition, ExperimentId::CriticalBoundary, ExperimentId::NuDependence})
    if (name == experiment_name(id)) return id;
  throw InvalidInputError("unknown experiment: " + name);
}

struct ExperimentConfig {
  ExperimentId id = ExperimentId::PrescaleAcceleration;
  std::vector<std::size_t> n_grid;
  std::vector<double> eps_grid;
  std::vector<double> eta_grid;
  std::vector<double> outlier_grid;
  std::vector<double> nu_grid;
  std::vector<double> delta_grid;
  std::uint64_t seed = 1;
  std::size_t max_iter = 1000000;
  unsigned threads = 1;
  // Wall time per cell is only recorded when asked: the results table must
  // stay a pure function of (config, seeds).
  bool timings = false;
  std::optional<double> wall_budget_s;

  void apply_defaults() {
    switch (id) {
      case ExperimentId::OutlierIndependence:
        if (n_grid.empty()) n_grid = {8};
        if (eps_grid.empty()) eps_grid = {1e-6};
        if (eta_grid.empty()) eta_grid = {1.0};
        if (outlier_grid.empty()) outlier_grid = {1e2, 1e4, 1e6};
        break;
      case ExperimentId::PrescaleAcceleration:
        if (n_grid.empty()) n_grid = {20, 100, 500};
        if (eps_grid.empty()) eps_grid = {1e-6};
        break;
      case ExperimentId::PhaseTransition:
        if (n_grid.empty()) n_grid = {16};
        if (eps_grid.empty()) eps_grid = {1e-4};
        if (nu_grid.empty()) nu_grid = {1e-3, 1e-6, 1e-9};
        break;
      case ExperimentId::CriticalBoundary:
        if (eps_grid.empty()) eps_grid = {1e-1, 1e-2, 1e-3};
        break;
      case ExperimentId::NuDependence:
        if (eps_grid.empty()) eps_grid = {1e-4};
        if (nu_grid.empty()) nu_grid = {1e-3, 1e-6, 1e-9};
        if (delta_grid.empty()) delta_grid = {1e-2, 1e-4, 1e-8};
        break;
    }
  }
};

struct CellResult {
  std::string key;                          // sort key, unique per cell
  std::vector<std::pair<std::string, std::string>> fields;
  bool ok = true;

  void put(const std::string& name, const std::string& value) { fields.emplace_back(name, value); }
  void put(const std::string& name, double value) { put(name, format_double(value)); }
  void put(const std::string& name, std::size_t value) { put(name, std::to_string(value)); }
};

namespace detail {

inline Matrix outlier_cost(std::size_t n, double outlier, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix cost(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = rng.next_in(0.0, 2.0);
  cost(0, 0) = outlier;
  return cost;
}

inline CellResult run_cell_outlier(const ExperimentConfig& cfg, std::size_t n, double eps,
                                   double eta, double outlier) {
  CellResult cell;
  cell.put("experiment", std::string(experiment_name(cfg.id)));
  cell.put("family", std::string("outlier_eot"));
  cell.put("n", n);
  cell.put("eps", eps);
  cell.put("eta", eta);
  cell.put("outlier", outlier);
  // One base cost per n: only the outlier magnitude varies inside a sweep.
  EotProblem problem{outlier_cost(n, outlier, cfg.seed + n), eta, Marginals::uniform(n, n), false};
  Matrix scaled_cost = problem.cost;
  for (auto& x : scaled_cost.data()) x *= eta;
  const auto wb = well_bounded(scaled_cost, problem.targets, 2.0);
  cell.put("kappa_margin", wb.kappa_margin);
  auto result = solve_eot(problem, eps, cfg.max_iter, Domain::Log);
  cell.put("iterations", result.iterations);
  cell.put("converged", std::string(result.converged ? "1" : "0"));
  cell.put("final_err", result.trace.rows.back().total_err);
  return cell;
}

inline CellResult run_cell_prescale(const ExperimentConfig& cfg, std::size_t n, double eps,
                                    bool prescale_on) {
  CellResult cell;
  cell.put("experiment", std::string(experiment_name(cfg.id)));
  cell.put("family", std::string("thm71_dense"));
  cell.put("n", n);
  cell.put("eps", eps);
  cell.put("prescale", std::string(prescale_on ? "on" : "off"));
  auto gen = gen_thm71(n);
  ScalingInstance instance = gen.instance;
  if (prescale_on)
    instance = ScalingInstance(prescale(instance.matrix, instance.targets), instance.targets);
  auto run = sk_run(instance, eps, cfg.max_iter);
  cell.put("iterations", run.iterations);
  cell.put("converged", std::string(run.converged ? "1" : "0"));
  cell.put("final_err", run.trace.rows.back().total_err);
  return cell;
}

inline CellResult run_cell_phase(const ExperimentConfig& cfg, std::size_t n, double eps,
                                 double nu_target, bool dense) {
  CellResult cell;
  cell.put("experiment", std::string(experiment_name(cfg.id)));
  cell.put("family", std::string(dense ? "dense_planted" : "thm61_block"));
  cell.put("n", n);
  cell.put("eps", eps);
  cell.put("nu_target", nu_target);
  ScalingInstance instance;
  if (dense) {
    RandomSpec spec;
    spec.family = Family::RandomDense;
    spec.m = spec.n = n;
    spec.gamma = spec.gamma_prime = 0.7;
    spec.rho = 0.5;
    spec.seed = cfg.seed + n;
    auto gen = gen_random(spec);
    // Plant one tiny entry: nu collapses while the density count is intact.
    gen.instance.matrix(1, 1) = nu_target;
    instance = ScalingInstance(gen.instance.matrix, gen.instance.targets);
  } else {
    const std::size_t t = 2 * n / 5, s = 3 * n / 5;
    instance = gen_thm61(n, t, s, nu_target).instance;
  }
  cell.put("nu", nu(instance.matrix));
  const auto dens = best_rho(instance.matrix, instance.targets);
  cell.put("gamma", dens.gamma);
  cell.put("gamma_prime", dens.gamma_prime);
  auto run = sk_run(instance, eps, cfg.max_iter);
  cell.put("iterations", run.iterations);
  cell.put("converged", std::string(run.converged ? "1" : "0"));
  cell.put("final_err", run.trace.rows.back().total_err);
  return cell;
}

inline CellResult run_cell_critical(const ExperimentConfig& cfg, double p, double q, double eps) {
  CellResult cell;
  cell.put("experiment", std::string(experiment_name(cfg.id)));
  cell.put("family", std::string("critical2x2"));
  cell.put("p", p);
  cell.put("q", q);
  cell.put("eps", eps);
  auto gen = gen_critical2x2(p, q);
  auto run = sk_run(gen.instance, eps, cfg.max_iter);
  cell.put("iterations", run.iterations);
  cell.put("converged", std::string(run.converged ? "1" : "0"));
  cell.put("final_err", run.trace.rows.back().total_err);
  const double bound = 2.0 * std::ceil(1.0 / (2.0 * eps));
  cell.put("step_bound", bound);
  return cell;
}

inline CellResult run_cell_nu(const ExperimentConfig& cfg, const std::string& family, double param,
                              double eps) {
  CellResult cell;
  cell.put("experiment", std::string(experiment_name(cfg.id)));
  cell.put("family", family);
  cell.put("param", param);
  cell.put("eps", eps);
  ScalingInstance instance;
  if (family == "thm61_block") {
    instance = gen_thm61(20, 8, 12, param).instance;
  } else {
    instance = gen_tight2x2(1.0, param, param, 1.0).instance;
  }
  cell.put("nu", nu(instance.matrix));
  cell.put("minus_log_nu", -std::log(nu(instance.matrix)));
  auto run = sk_run(instance, eps, cfg.max_iter);
  cell.put("iterations", run.iterations);
  cell.put("converged", std::string(run.converged ? "1" : "0"));
  cell.put("final_err", run.trace.rows.back().total_err);
  return cell;
}

inline std::string cell_key(const CellResult& cell) {
  std::string key;
  for (const auto& [name, value] : cell.fields) {
    key += name;
    key += '=';
    key += value;
    key += ';';
  }
  return key;
}

}  // namespace detail

// Expands the config grids into per-cell closures, runs them (optionally on a
// small worker pool), and returns rows sorted by cell key. Per-cell failures
// become error rows; the run continues.
inline std::vector<CellResult> run_experiment(ExperimentConfig cfg) {
  cfg.apply_defaults();
  std::vector<std::function<CellResult()>> cells;
  switch (cfg.id) {
    case ExperimentId::OutlierIndependence:
      for (std::size_t n : cfg.n_grid)
        for (double eps : cfg.eps_grid)
          for (double eta : cfg.eta_grid)
            for (double outlier : cfg.outlier_grid)
              cells.push_back(
                  [=, &cfg] { return detail::run_cell_outlier(cfg, n, eps, eta, outlier); });
      break;
    case ExperimentId::PrescaleAcceleration:
      for (std::size_t n : cfg.n_grid)
        for (double eps : cfg.eps_grid)
          for (bool on : {false, true})
            cells.push_back([=, &cfg] { return detail::run_cell_prescale(cfg, n, eps, on); });
      break;
    case ExperimentId::PhaseTransition:
      for (std::size_t n : cfg.n_grid)
        for (double eps : cfg.eps_grid)
          for (double nu_target : cfg.nu_grid)
            for (bool dense : {true, false})
              cells.push_back(
                  [=, &cfg] { return detail::run_cell_phase(cfg, n, eps, nu_target, dense); });
      break;
    case ExperimentId::CriticalBoundary:
      // (0.5, 0.1) attains the Delta/(1+2 Delta) worst case; the others decay
      // geometrically for contrast.
      for (double eps : cfg.eps_grid)
        for (auto [p, q] : std::vector<std::pair<double, double>>{{0.5, 0.1}, {0.4, 0.2},
                                                                  {0.3, 0.05}})
          cells.push_back([=, &cfg] { return detail::run_cell_critical(cfg, p, q, eps); });
      break;
    case ExperimentId::NuDependence:
      for (double eps : cfg.eps_grid)
        for (double nu_value : cfg.nu_grid)
          cells.push_back(
              [=, &cfg] { return detail::run_cell_nu(cfg, "thm61_block", nu_value, eps); });
      for (double delta : cfg.delta_grid)
        cells.push_back([=, &cfg] { return detail::run_cell_nu(cfg, "tight2x2", delta, 1e-8); });
      break;
  }

  const auto run_one = [&cfg](const std::function<CellResult()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    CellResult cell;
    try {
      cell = fn();
      cell.put("status", std::string("ok"));
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.put("status", std::string("error: ") + e.what());
    }
    // The sort key is fixed before any clock-dependent column is appended.
    cell.key = detail::cell_key(cell);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cfg.timings) cell.put("wall_ms", secs * 1e3);
    // Cells over the wall budget are marked, never dropped. Both columns are
    // clock-dependent, so they only exist when explicitly requested.
    if (cfg.wall_budget_s && secs > *cfg.wall_budget_s)
      cell.put("budget_exceeded", std::string("1"));
    return cell;
  };

  std::vector<CellResult> results(cells.size());
  if (cfg.threads <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) results[i] = run_one(cells[i]);
  } else {
    std::vector<std::future<CellResult>> futures;
    futures.reserve(cells.size());
    for (auto& fn : cells)
      futures.push_back(std::async(std::launch::async, [&run_one, &fn] { return run_one(fn); }));
    for (std::size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
  }
  std::sort(results.begin(), results.end(),
            [](const CellResult& a, const CellResult& b) { return a.key < b.key; });
  return results;
}

// The header is the union of field names in first-seen order; rows print
// their values or empty cells. Output depends only on the result rows.
inline void write_results_csv(const std::vector<CellResult>& results, std::ostream& os) {
  std::vector<std::string> header;
  for (const auto& cell : results)
    for (const auto& [name, value] : cell.fields)
      if (std::find(header.begin(), header.end(), name) == header.end()) header.push_back(name);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << '\n';
  for (const auto& cell : results) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) os << ',';
      for (const auto& [name, value] : cell.fields)
        if (name == header[i]) {
          os << value;
          break;
        }
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Minimal SVG line chart (fixed 800x500 canvas, optional log axes).

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

inline void write_svg_linechart(std::ostream& os, const std::vector<SvgSeries>& series,
                                bool log_x = false, bool log_y = false,
                                const std::string& title = "") {
  const double width = 800.0, height = 500.0, pad = 60.0;
  const auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  const auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  double x_lo = kInf, x_hi = -kInf, y_lo = kInf, y_hi = -kInf;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      x_lo = std::min(x_lo, tx(x));
      x_hi = std::max(x_hi, tx(x));
      y_lo = std::min(y_lo, ty(y));
      y_hi = std::max(y_hi, ty(y));
    }
  if (!std::isfinite(x_lo)) {
    x_lo = 0.0;
    y_lo = 0.0;
    x_hi = y_hi = 1.0;
  }
  if (!(x_hi > x_lo)) x_hi = x_lo + 1.0;
  if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;
  const auto px = [&](double x) { return pad + (tx(x) - x_lo) / (x_hi - x_lo) * (width - 2 * pad); };
  const auto py = [&](double y) {
    return height - pad - (ty(y) - y_lo) / (y_hi - y_lo) * (height - 2 * pad);
  };
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" "
        "viewBox=\"0 0 800 500\">\n";
  os << "  <rect width=\"800\" height=\"500\" fill=\"white\"/>\n";
  os << "  <line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - pad
     << "\" y2=\"" << height - pad << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
     << height - pad << "\" stroke=\"black\"/>\n";
  if (!title.empty())
    os << "  <text x=\"400\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">" << title
       << "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double fx = x_lo + (x_hi - x_lo) * tick / 4.0;
    const double fy = y_lo + (y_hi - y_lo) * tick / 4.0;
    const double sx = pad + (width - 2 * pad) * tick / 4.0;
    const double sy = height - pad - (height - 2 * pad) * tick / 4.0;
    os << "  <text x=\"" << sx << "\" y=\"" << height - pad + 20
       << "\" text-anchor=\"middle\" font-size=\"11\">" << (log_x ? "1e" : "")
       << format_double(log_x ? fx : fx) << "</text>\n";
    os << "  <text x=\"" << pad - 8 << "\" y=\"" << sy + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << (log_y ? "1e" : "")
       << format_double(log_y ? fy : fy) << "</text>\n";
  }
  std::size_t color = 0;
  for (const auto& s : series) {
    os << "  <polyline fill=\"none\" stroke=\"" << palette[color % 6] << "\" stroke-width=\"2\" "
       << "points=\"";
    for (const auto& [x, y] : s.points) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    os << "  <text x=\"" << width - pad + 5 << "\" y=\"" << pad + 18.0 * static_cast<double>(color)
       << "\" font-size=\"11\" fill=\"" << palette[color % 6] << "\">" << s.label << "</text>\n";
    ++color;
  }
  os << "</svg>\n";
}

}  // namespace sinkscale
