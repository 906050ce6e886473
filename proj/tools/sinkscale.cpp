// sinkscale: matrix scaling and entropic OT workbench.
//
// Subcommands: scale | eot | diagnose | reduce | permanent | gen | bench.
// Exit codes: 0 success, 2 invalid input, 3 per-cell failures present.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sinkscale/bench.hpp"
#include "sinkscale/diagnostics.hpp"
#include "sinkscale/eot.hpp"
#include "sinkscale/instance_gen.hpp"
#include "sinkscale/io.hpp"
#include "sinkscale/permanent.hpp"
#include "sinkscale/permanent_trace.hpp"
#include "sinkscale/reduction.hpp"
#include "sinkscale/sk.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sinkscale;

namespace {

Marginals resolve_targets(const Matrix& m, const std::string& u_file, const std::string& v_file,
                          bool ones) {
  if (!u_file.empty() != !v_file.empty())
    throw InvalidInputError("provide both --u and --v, or neither");
  if (!u_file.empty()) return Marginals(load_vector(u_file), load_vector(v_file));
  if (ones) {
    if (m.rows() != m.cols())
      throw InvalidInputError("--ones targets need a square matrix; pass --u/--v instead");
    return Marginals::ones(m.rows());
  }
  return Marginals::uniform(m.rows(), m.cols());
}

std::map<std::string, double> parse_params(const std::string& spec) {
  std::map<std::string, double> params;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw InvalidInputError("--params entries must look like key=value, got '" + item + "'");
    params[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
  }
  return params;
}

void write_trace(const SkTrace& trace, const std::string& path) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write trace file: " + path);
  trace.to_csv(out);
}

struct SweepPoint {
  std::string series;
  double x;
  double y;
};

void maybe_write_svg(const std::vector<CellResult>& rows, ExperimentId id, const fs::path& path) {
  const char* x_field = "n";
  bool log_x = false;
  switch (id) {
    case ExperimentId::OutlierIndependence: x_field = "outlier"; log_x = true; break;
    case ExperimentId::PrescaleAcceleration: x_field = "n"; log_x = true; break;
    case ExperimentId::PhaseTransition: x_field = "nu_target"; log_x = true; break;
    case ExperimentId::CriticalBoundary: x_field = "eps"; log_x = true; break;
    case ExperimentId::NuDependence: x_field = "param"; log_x = true; break;
  }
  std::map<std::string, SvgSeries> series;
  for (const auto& cell : rows) {
    if (!cell.ok) continue;
    std::string label;
    double x = 0.0, y = 0.0;
    bool have_x = false, have_y = false;
    for (const auto& [name, value] : cell.fields) {
      if (name == "family") label = value;
      if (name == "prescale") label += ":prescale=" + value;
      if (name == "p") label += ":p=" + value;
      if (name == x_field) {
        x = std::stod(value);
        have_x = true;
      }
      if (name == "iterations") {
        y = std::stod(value);
        have_y = true;
      }
    }
    if (!have_x || !have_y) continue;
    auto& s = series[label];
    s.label = label;
    s.points.emplace_back(x, y);
  }
  std::vector<SvgSeries> list;
  for (auto& [label, s] : series) {
    std::sort(s.points.begin(), s.points.end());
    list.push_back(s);
  }
  std::ofstream out(path);
  write_svg_linechart(out, list, log_x, false,
                      std::string("iterations by ") + x_field + " (" + experiment_name(id) + ")");
}

int cmd_scale(const std::string& matrix_file, const std::string& u_file,
              const std::string& v_file, bool ones, double eps, std::size_t max_iter,
              const std::string& trace_file, const std::string& result_file, bool with_permanent) {
  Matrix m = load_matrix(matrix_file);
  ScalingInstance instance(m, resolve_targets(m, u_file, v_file, ones));
  TraceOptions opts;
  opts.with_permanent = with_permanent;
  auto run = sk_run(instance, eps, max_iter, opts);
  write_trace(run.trace, trace_file);
  if (!result_file.empty()) save_matrix(run.state.current, result_file);
  std::cout << (run.converged ? "converged" : "max_iter reached") << " iterations="
            << run.iterations << " final_err=" << format_double(run.trace.rows.back().total_err)
            << "\n";
  return 0;
}

int cmd_eot(const std::string& cost_file, double eta, const std::string& u_file,
            const std::string& v_file, double eps, std::size_t max_iter,
            const std::string& prescale_mode, const std::string& domain_name,
            const std::string& trace_file, const std::string& plan_file) {
  Matrix cost = load_matrix(cost_file);
  EotProblem problem;
  problem.cost = cost;
  problem.eta = eta;
  problem.targets = resolve_targets(cost, u_file, v_file, false);
  problem.prescale = prescale_mode == "on";
  Domain domain = Domain::Auto;
  if (domain_name == "direct") domain = Domain::Direct;
  else if (domain_name == "log") domain = Domain::Log;
  else if (domain_name != "auto") throw InvalidInputError("--domain must be auto, direct or log");
  auto result = solve_eot(problem, eps, max_iter, domain);
  write_trace(result.trace, trace_file);
  if (!plan_file.empty()) save_matrix(result.plan, plan_file);
  std::cout << (result.converged ? "converged" : "max_iter reached")
            << " iterations=" << result.iterations
            << " final_err=" << format_double(result.trace.rows.back().total_err)
            << " domain=" << (result.domain_used == Domain::Log ? "log" : "direct") << "\n";
  return 0;
}

int cmd_diagnose(const std::string& matrix_file, const std::string& u_file,
                 const std::string& v_file, bool ones, double rho, const std::string& json_file) {
  Matrix m = load_matrix(matrix_file);
  Marginals targets = resolve_targets(m, u_file, v_file, ones);
  ScalingInstance instance(m, targets);

  const DiagnosticsReport report = diagnose(instance, rho);
  const double nu_value = report.nu;
  const DensityReport& dens = report.density;
  const WellBoundednessReport& wb = report.well_bounded;
  const ScalabilityReport& sc = report.scalability;

  std::cout << "matrix            " << m.rows() << " x " << m.cols() << "\n"
            << "nu                " << format_double(nu_value) << "\n"
            << "density (best)    gamma=" << format_double(dens.gamma)
            << " gamma'=" << format_double(dens.gamma_prime) << " rho=" << format_double(dens.rho)
            << (dens.is_dense ? "  [dense: gamma+gamma' > 1]" : "  [not dense]") << "\n"
            << "well-bounded      rho=" << format_double(rho)
            << " r_rho=" << format_double(wb.r_rho) << " c_rho=" << format_double(wb.c_rho)
            << " kappa_margin=" << format_double(wb.kappa_margin) << "\n"
            << "scalability       " << (sc.feasible() ? "Feasible" : "Infeasible") << " ("
            << sc.note << "), flow=" << format_double(sc.flow_value) << "/"
            << format_double(sc.supply) << "\n";
  if (!sc.feasible()) {
    std::cout << "violating cut     rows {";
    for (std::size_t i = 0; i < sc.cut_rows.size(); ++i)
      std::cout << (i ? "," : "") << sc.cut_rows[i] + 1;
    std::cout << "} vs columns {";
    for (std::size_t j = 0; j < sc.cut_cols.size(); ++j)
      std::cout << (j ? "," : "") << sc.cut_cols[j] + 1;
    std::cout << "}\n";
  }

  if (!json_file.empty()) {
    json doc{{"rows", m.rows()},
             {"cols", m.cols()},
             {"nu", nu_value},
             {"density",
              {{"gamma", dens.gamma},
               {"gamma_prime", dens.gamma_prime},
               {"rho", dens.rho},
               {"is_dense", dens.is_dense}}},
             {"well_bounded",
              {{"rho", wb.rho},
               {"r_rho", wb.r_rho},
               {"c_rho", wb.c_rho},
               {"kappa_margin", wb.kappa_margin}}},
             {"scalability",
              {{"verdict", sc.feasible() ? "Feasible" : "Infeasible"},
               {"note", sc.note},
               {"flow", sc.flow_value},
               {"supply", sc.supply},
               {"cut_rows", sc.cut_rows},
               {"cut_cols", sc.cut_cols}}}};
    std::ofstream out(json_file);
    if (!out) throw InvalidInputError("cannot write json file: " + json_file);
    out << doc.dump(2) << "\n";
  }
  return 0;
}

int cmd_reduce(const std::string& matrix_file, const std::string& u_file,
               const std::string& v_file, long long L, std::size_t verify_steps, bool force,
               const std::string& prefix) {
  Matrix m = load_matrix(matrix_file);
  if (u_file.empty() || v_file.empty())
    throw InvalidInputError("reduce needs explicit --u and --v targets");
  ScalingInstance instance(m, Marginals(load_vector(u_file), load_vector(v_file)));
  if (L == 0) {
    auto lcd = auto_lcd(instance.targets);
    if (!lcd)
      throw InvalidInputError(
          "targets have no common denominator <= 1e6; pass --L explicitly");
    L = *lcd;
    std::cout << "auto L = " << L << " (least common denominator)\n";
  }
  IntegerTargets ti = discretize(instance.targets, L);
  ReducedInstance reduced = expand(instance, ti, force);
  save_matrix(reduced.G, prefix + ".txt");

  json sidecar{{"L", ti.L},
               {"R", ti.R},
               {"t_shift", ti.t_shift},
               {"u_prime", ti.u_prime},
               {"v_prime", ti.v_prime},
               {"N", reduced.G.rows()}};
  json row_offsets = json::array(), col_offsets = json::array();
  for (const auto& [begin, end] : reduced.row_blocks) row_offsets.push_back(begin);
  for (const auto& [begin, end] : reduced.col_blocks) col_offsets.push_back(begin);
  sidecar["block_offsets"] = {{"rows", row_offsets}, {"cols", col_offsets}};

  if (verify_steps > 0) {
    auto rep = verify_equivalence(instance, L, verify_steps, force);
    sidecar["verify"] = {{"steps", verify_steps},
                         {"exact_branch", rep.exact_branch},
                         {"max_deviation", rep.max_deviation},
                         {"slack_first_step", rep.slack.empty() ? 0.0 : rep.slack.front()}};
    std::cout << "verify: max per-step deviation " << format_double(rep.max_deviation)
              << (rep.exact_branch ? " (exact branch)" : "") << "\n";
  }
  std::ofstream side(prefix + ".json");
  if (!side) throw InvalidInputError("cannot write sidecar: " + prefix + ".json");
  side << sidecar.dump(2) << "\n";
  std::cout << "reduced " << m.rows() << "x" << m.cols() << " -> " << reduced.G.rows() << "x"
            << reduced.G.cols() << " at " << prefix << ".txt\n";
  return 0;
}

int cmd_permanent(const std::string& matrix_file, bool log_value) {
  Matrix m = load_matrix(matrix_file);
  if (log_value)
    std::cout << format_double(permanent_log(m)) << "\n";
  else
    std::cout << format_double(permanent(m)) << "\n";
  return 0;
}

int cmd_gen(const std::string& family_name, const std::string& params_spec, std::uint64_t seed,
            const std::string& prefix) {
  InstanceSpec spec;
  spec.family = family_from_name(family_name);
  spec.params = parse_params(params_spec);
  spec.seed = seed;
  GeneratedInstance gen = generate(spec);

  save_matrix(gen.instance.matrix, prefix + ".txt");
  save_vector(gen.instance.targets.u, prefix + ".u.txt");
  save_vector(gen.instance.targets.v, prefix + ".v.txt");
  json sidecar = gen.audit;
  sidecar["seed"] = seed;
  sidecar["params"] = spec.params;
  sidecar["files"] = {{"matrix", prefix + ".txt"},
                      {"u", prefix + ".u.txt"},
                      {"v", prefix + ".v.txt"}};
  if (gen.log_matrix) {
    save_matrix(*gen.log_matrix, prefix + ".log.txt");
    sidecar["files"]["log_matrix"] = prefix + ".log.txt";
    sidecar["use_log_domain"] = true;
  }
  std::ofstream side(prefix + ".json");
  if (!side) throw InvalidInputError("cannot write sidecar: " + prefix + ".json");
  side << sidecar.dump(2) << "\n";
  std::cout << "wrote " << prefix << ".txt (+ targets, sidecar)\n";
  return 0;
}

int cmd_bench(const std::string& experiment, const std::string& out_dir, std::uint64_t seed,
              unsigned threads, bool timings, bool svg, const std::string& n_grid,
              const std::string& eps_grid, const std::string& eta_grid,
              const std::string& outlier_grid, const std::string& nu_grid,
              const std::string& delta_grid, std::size_t max_iter, double budget_s) {
  const auto parse_doubles = [](const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(std::stod(item));
    return out;
  };
  ExperimentConfig cfg;
  cfg.id = experiment_from_name(experiment);
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.timings = timings;
  cfg.max_iter = max_iter;
  if (budget_s > 0.0) cfg.wall_budget_s = budget_s;
  for (double n : parse_doubles(n_grid)) cfg.n_grid.push_back(static_cast<std::size_t>(n));
  cfg.eps_grid = parse_doubles(eps_grid);
  cfg.eta_grid = parse_doubles(eta_grid);
  cfg.outlier_grid = parse_doubles(outlier_grid);
  cfg.nu_grid = parse_doubles(nu_grid);
  cfg.delta_grid = parse_doubles(delta_grid);

  auto rows = run_experiment(cfg);
  fs::create_directories(out_dir);
  const fs::path csv_path = fs::path(out_dir) / (experiment + ".csv");
  std::ofstream out(csv_path);
  if (!out) throw InvalidInputError("cannot write results: " + csv_path.string());
  write_results_csv(rows, out);
  std::cout << "wrote " << csv_path.string() << " (" << rows.size() << " cells)\n";
  if (svg) {
    const fs::path svg_path = fs::path(out_dir) / (experiment + ".svg");
    maybe_write_svg(rows, cfg.id, svg_path);
    std::cout << "wrote " << svg_path.string() << "\n";
  }
  for (const auto& cell : rows)
    if (!cell.ok) {
      std::cerr << "per-cell failures present (see status column)\n";
      return 3;
    }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sinkhorn-Knopp scaling, entropic OT, and phase-transition workbench"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file applied to options");

  std::uint64_t seed = 1;
  std::string out_dir = ".";
  unsigned threads = 1;
  app.add_option("--seed", seed, "seed for random families");
  app.add_option("--out", out_dir, "output directory for bench");
  app.add_option("--threads", threads, "worker threads for bench cells");

  // scale
  auto* scale = app.add_subcommand("scale", "run SK (u,v)-scaling on a matrix");
  std::string s_matrix, s_u, s_v, s_trace, s_result;
  bool s_ones = false, s_perm = false;
  double s_eps = 1e-6;
  std::size_t s_max_iter = 1000000;
  scale->add_option("--matrix", s_matrix, "matrix file (.txt or .json)")->required();
  scale->add_option("--u", s_u, "row targets file");
  scale->add_option("--v", s_v, "column targets file");
  scale->add_flag("--ones", s_ones, "use all-ones targets (square matrices)");
  scale->add_option("--eps", s_eps, "l1 marginal error target");
  scale->add_option("--max-iter", s_max_iter, "half-step cap");
  scale->add_option("--trace", s_trace, "write the per-step CSV trace here");
  scale->add_option("--result", s_result, "write the final matrix here");
  scale->add_flag("--permanent", s_perm, "record permanents in the trace (square, n <= 12)");

  // eot
  auto* eot = app.add_subcommand("eot", "entropic optimal transport via SK");
  std::string e_cost, e_u, e_v, e_trace, e_plan, e_prescale = "off", e_domain = "auto";
  double e_eta = 1.0, e_eps = 1e-6;
  std::size_t e_max_iter = 1000000;
  eot->add_option("--cost", e_cost, "cost matrix file")->required();
  eot->add_option("--eta", e_eta, "regularization parameter");
  eot->add_option("--u", e_u, "row marginals file");
  eot->add_option("--v", e_v, "column marginals file");
  eot->add_option("--eps", e_eps, "l1 marginal error target");
  eot->add_option("--max-iter", e_max_iter, "half-step cap");
  eot->add_option("--prescale", e_prescale, "on|off: feed diag(u) K diag(v) to SK");
  eot->add_option("--domain", e_domain, "auto|direct|log engine selection");
  eot->add_option("--trace", e_trace, "write the per-step CSV trace here");
  eot->add_option("--plan", e_plan, "write the transport plan here");

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "structural diagnostics of an instance");
  std::string d_matrix, d_u, d_v, d_json;
  bool d_ones = false;
  double d_rho = 1.0;
  diagnose->add_option("--matrix", d_matrix, "matrix file")->required();
  diagnose->add_option("--u", d_u, "row targets file");
  diagnose->add_option("--v", d_v, "column targets file");
  diagnose->add_flag("--ones", d_ones, "use all-ones targets");
  diagnose->add_option("--rho", d_rho, "threshold for the well-boundedness report");
  diagnose->add_option("--json", d_json, "write the structured report here");

  // reduce
  auto* reduce = app.add_subcommand("reduce", "discretize-and-subdivide to (1,1)-scaling");
  std::string r_matrix, r_u, r_v, r_prefix = "reduced";
  long long r_L = 0;
  std::size_t r_steps = 0;
  bool r_force = false;
  reduce->add_option("--matrix", r_matrix, "matrix file")->required();
  reduce->add_option("--u", r_u, "row targets file")->required();
  reduce->add_option("--v", r_v, "column targets file")->required();
  reduce->add_option("--L", r_L, "discretization scale (0 = least common denominator)");
  reduce->add_option("--steps", r_steps, "also verify the error identity for this many steps");
  reduce->add_flag("--force", r_force, "override the N <= 20000 memory guard");
  reduce->add_option("--out", r_prefix, "output prefix for matrix + sidecar");

  // permanent
  auto* perm = app.add_subcommand("permanent", "exact permanent of a small square matrix");
  std::string p_matrix;
  bool p_log = false;
  perm->add_option("--matrix", p_matrix, "matrix file")->required();
  perm->add_flag("--log", p_log, "print log(per) instead");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a paper-family instance");
  std::string g_family, g_params, g_prefix = "instance";
  gen->add_option("--family", g_family,
                  "thm61_block|thm71_dense|tight2x2|critical2x2|uv_hard|random_dense|random_block")
      ->required();
  gen->add_option("--params", g_params, "comma-separated key=value parameters");
  gen->add_option("--out", g_prefix, "output prefix");

  // bench
  auto* bench = app.add_subcommand("bench", "run a sweep experiment and write CSV");
  std::string b_experiment, b_n, b_eps, b_eta, b_outlier, b_nu, b_delta;
  bool b_timings = false, b_svg = false;
  std::size_t b_max_iter = 1000000;
  double b_budget = 0.0;
  bench
      ->add_option("--experiment", b_experiment,
                   "outlier_independence|prescale_acceleration|phase_transition|critical_boundary|"
                   "nu_dependence")
      ->required();
  bench->add_option("--n-grid", b_n, "comma-separated dimensions");
  bench->add_option("--eps-grid", b_eps, "comma-separated accuracies");
  bench->add_option("--eta-grid", b_eta, "comma-separated regularization values");
  bench->add_option("--outlier-grid", b_outlier, "comma-separated outlier magnitudes");
  bench->add_option("--nu-grid", b_nu, "comma-separated nu values");
  bench->add_option("--delta-grid", b_delta, "comma-separated tight2x2 deltas");
  bench->add_option("--max-iter", b_max_iter, "half-step cap per cell");
  bench->add_flag("--timings", b_timings, "record wall_ms (breaks byte-reproducibility)");
  bench->add_option("--budget", b_budget,
                    "per-cell wall budget in seconds; slower cells are marked");
  bench->add_flag("--svg", b_svg, "also emit a line chart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0, anything malformed is invalid input
  }

  try {
    if (scale->parsed())
      return cmd_scale(s_matrix, s_u, s_v, s_ones, s_eps, s_max_iter, s_trace, s_result, s_perm);
    if (eot->parsed())
      return cmd_eot(e_cost, e_eta, e_u, e_v, e_eps, e_max_iter, e_prescale, e_domain, e_trace,
                     e_plan);
    if (diagnose->parsed()) return cmd_diagnose(d_matrix, d_u, d_v, d_ones, d_rho, d_json);
    if (reduce->parsed()) return cmd_reduce(r_matrix, r_u, r_v, r_L, r_steps, r_force, r_prefix);
    if (perm->parsed()) return cmd_permanent(p_matrix, p_log);
    if (gen->parsed()) return cmd_gen(g_family, g_params, seed, g_prefix);
    if (bench->parsed())
      return cmd_bench(b_experiment, out_dir, seed, threads, b_timings, b_svg, b_n, b_eps, b_eta,
                       b_outlier, b_nu, b_delta, b_max_iter, b_budget);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
