// Command-line front end: gradient membership and decomposition, static and
// variational diffusivity bounds, and the Monte Carlo correction estimate.
// Exit codes: 0 success (gradient where applicable), 1 input or runtime
// error, 2 non-gradient input with a serialized witness, 3 selftest failure.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gkdiff/json_io.hpp"
#include "gkdiff/selftest.hpp"

namespace {

using namespace gkdiff;

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const std::exception& e) {
    throw InputError("invalid JSON in '" + path + "': " + e.what());
  }
}

void emit(const Json& doc, const std::string& out_path) {
  const std::string text = doc.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(out_path);
  if (!os) throw InputError("cannot write '" + out_path + "'");
  os << text;
}

void emit_csv(const CorrelationSeries& series, const std::string& path) {
  if (path.empty()) return;
  std::ofstream os(path);
  if (!os) throw InputError("cannot write '" + path + "'");
  write_series_csv(os, series);
}

struct ModelOpts {
  std::string model;
  double density = 0.5;
  double rate = 1.0;
  int kappa = 0;
  double fugacity = 1.0;
  int dim = 1;
  std::string marginal_path;
};

void add_model_flags(CLI::App* cmd, ModelOpts& o) {
  cmd->add_option("--model", o.model, "lattice model: ssep, gep or zero-range");
  cmd->add_option("--density", o.density, "ssep particle density (default 0.5)");
  cmd->add_option("--rate", o.rate, "ssep exchange rate (default 1)");
  cmd->add_option("--kappa", o.kappa, "occupation cap for gep / zero-range");
  cmd->add_option("--fugacity", o.fugacity, "fugacity for gep / zero-range (default 1)");
  cmd->add_option("--dim", o.dim, "lattice dimension (default 1)");
  cmd->add_option("--marginal", o.marginal_path,
                  "marginal JSON file; ssep only, atoms must be {0,1}");
}

BondGenerator build_model(const ModelOpts& o) {
  if (o.model == "ssep") {
    if (!o.marginal_path.empty()) {
      const double r = o.rate;
      return BondGenerator::make_ssep(
          marginal_from_json(load_json_file(o.marginal_path)),
          [r](double, double) { return r; }, "const:" + std::to_string(r),
          o.dim);
    }
    return BondGenerator::make_ssep(o.density, o.rate, o.dim);
  }
  if (!o.marginal_path.empty())
    throw InputError("the " + o.model + " marginal is fixed by kappa and fugacity");
  if (o.model == "gep") {
    if (o.kappa < 1) throw InputError("gep needs --kappa >= 1");
    return BondGenerator::make_gep(o.kappa, o.fugacity, o.dim);
  }
  if (o.model == "zero-range") {
    if (o.kappa < 1) throw InputError("zero-range needs --kappa >= 1");
    return BondGenerator::make_zero_range([](int k) { return double(k); },
                                          o.kappa, o.fugacity, o.dim);
  }
  throw InputError("model must be ssep, gep or zero-range");
}

Json model_doc(const ModelOpts& o) {
  if (o.model == "ssep")
    return Json{{"model", "ssep"}, {"density", o.density}, {"rate", o.rate},
                {"dim", o.dim}};
  return Json{{"model", o.model}, {"kappa", o.kappa}, {"fugacity", o.fugacity},
              {"dim", o.dim}};
}

struct RunOpts {
  std::string kernel;  // named kernel; custom kernels come from --config
  double shape = 1.0;
  double temperature = 1.0;
  int N = 64;
  double t_max = 16.0;
  int trajectories = 400;
  std::uint64_t seed = 1;
  int lag_count = 33;
  int threads = 0;  // 0: GKDIFF_THREADS, then hardware
  std::string config_path, out_path, csv_path;
  Json kernel_spec;  // resolved selector, string or {"custom": {...}}
};

void add_run_flags(CLI::App* cmd, ModelOpts& m, RunOpts& r) {
  add_model_flags(cmd, m);
  cmd->add_option("--kernel", r.kernel,
                  "exchange kernel: uniform, sqrt_rate or zero");
  cmd->add_option("--shape", r.shape, "gamma marginal shape (default 1)");
  cmd->add_option("--temperature", r.temperature,
                  "gamma marginal temperature (default 1)");
  cmd->add_option("--N", r.N, "ring size (default 64)");
  cmd->add_option("--t-max", r.t_max, "largest time lag (default 16)");
  cmd->add_option("--trajectories", r.trajectories,
                  "independent trajectories (default 400)");
  cmd->add_option("--seed", r.seed, "RNG seed; same config + seed gives "
                  "byte-identical output (default 1)");
  cmd->add_option("--lag-count", r.lag_count, "sample lags on [0, t-max] (default 33)");
  cmd->add_option("--threads", r.threads,
                  "worker threads; 0 reads GKDIFF_THREADS, then hardware");
  cmd->add_option("--config", r.config_path,
                  "run config JSON; explicit flags override its values");
  cmd->add_option("--out", r.out_path, "write the JSON report here instead of stdout");
  cmd->add_option("--csv", r.csv_path,
                  "write the correlation series as CSV with fixed columns lag,C,SE");
}

// Config file fills every run parameter the command line left untouched.
void merge_config(const CLI::App* cmd, ModelOpts& m, RunOpts& r) {
  r.kernel_spec = Json();
  if (!r.config_path.empty()) {
    const Json cfg = load_json_file(r.config_path);
    jsonio::check_keys(cfg, "run",
                       {"model", "kernel", "shape", "temperature", "N", "t_max",
                        "trajectories", "seed", "lag_count", "threads",
                        "density", "rate", "kappa", "fugacity", "dim"});
    auto take = [&](const char* flag, const char* key, auto& slot) {
      using T = std::decay_t<decltype(slot)>;
      if (cmd->count(flag) == 0 && cfg.contains(key)) slot = cfg.at(key).get<T>();
    };
    take("--model", "model", m.model);
    take("--density", "density", m.density);
    take("--rate", "rate", m.rate);
    take("--kappa", "kappa", m.kappa);
    take("--fugacity", "fugacity", m.fugacity);
    take("--dim", "dim", m.dim);
    take("--shape", "shape", r.shape);
    take("--temperature", "temperature", r.temperature);
    take("--N", "N", r.N);
    take("--t-max", "t_max", r.t_max);
    take("--trajectories", "trajectories", r.trajectories);
    take("--seed", "seed", r.seed);
    take("--lag-count", "lag_count", r.lag_count);
    take("--threads", "threads", r.threads);
    if (cmd->count("--kernel") == 0 && cfg.contains("kernel"))
      r.kernel_spec = cfg.at("kernel");
  }
  if (!r.kernel.empty()) r.kernel_spec = Json(r.kernel);
  if (!r.kernel_spec.is_null() && !m.model.empty())
    throw InputError("choose either a lattice model or an exchange kernel, not both");
  if (r.kernel_spec.is_null() && m.model.empty())
    throw InputError("no system selected: pass --model, --kernel or a config file");
}

Json kernel_doc(const ExchangeKernel& k) {
  return Json{{"kernel", k.name()},
              {"shape", k.marginal()->shape()},
              {"temperature", k.marginal()->temperature()},
              {"balance_defect", k.balance_defect_value()}};
}

// --- check-gradient / decompose ------------------------------------------

Json membership_doc(const std::string& label, const MembershipReport& rep,
                    int dim, const std::optional<GradientDecomposition>& dec) {
  Json doc{{"label", label},
           {"in_gradient_space", rep.in_gradient_space},
           {"seminorm_sq", labeled_exact(rep.seminorm_sq)},
           {"max_abs_orbit_sum", labeled_exact(rep.max_abs_orbit_sum)},
           {"orbit_count", rep.orbit_count}};
  if (rep.witness_orbit) {
    doc["witness"] = Json{{"orbit", multi_index_to_json(*rep.witness_orbit, dim)},
                          {"orbit_sum", labeled_exact(rep.witness_sum)}};
  }
  if (dec) doc["decomposition"] = decomposition_to_json(*dec);
  return doc;
}

int run_check_gradient(const ModelOpts& mo, const std::string& function_path,
                       const std::string& out_path) {
  Json doc{{"command", "check-gradient"}};
  Json inputs = Json::array();
  bool all_gradient = true;
  auto examine = [&](const std::string& label, const LocalFunction& f) {
    const MembershipReport rep = gradient_membership(f);
    std::optional<GradientDecomposition> dec;
    if (rep.in_gradient_space) dec = decompose(f);
    all_gradient = all_gradient && rep.in_gradient_space;
    inputs.push_back(membership_doc(label, rep, f.dim(), dec));
  };
  if (!function_path.empty()) {
    examine("function", local_function_from_json(load_json_file(function_path)));
  } else if (!mo.model.empty()) {
    const BondGenerator model = build_model(mo);
    doc["system"] = model_doc(mo);
    for (int axis = 0; axis < model.dim(); ++axis)
      examine("current[axis " + std::to_string(axis) + "]",
              model.current_axis(axis));
  } else {
    throw InputError("check-gradient needs --model or --function");
  }
  doc["inputs"] = inputs;
  doc["gradient"] = all_gradient;
  emit(doc, out_path);
  return all_gradient ? 0 : 2;
}

int run_decompose(const ModelOpts& mo, const std::string& function_path,
                  const std::string& out_path) {
  std::optional<LocalFunction> f;
  Json doc{{"command", "decompose"}};
  if (!function_path.empty()) {
    f = local_function_from_json(load_json_file(function_path));
    doc["label"] = "function";
  } else if (!mo.model.empty()) {
    const BondGenerator model = build_model(mo);
    doc["system"] = model_doc(mo);
    doc["label"] = "current[axis 0]";
    f = model.current_axis(0);
  } else {
    throw InputError("decompose needs --model or --function");
  }
  try {
    doc["decomposition"] = decomposition_to_json(decompose(*f));
  } catch (const NotAGradientError& e) {
    doc["in_gradient_space"] = false;
    doc["witness"] =
        Json{{"orbit", multi_index_to_json(e.witness_orbit, f->dim())},
             {"orbit_sum", labeled_exact(e.witness_sum)},
             {"max_abs_orbit_sum", labeled_exact(e.max_abs_orbit_sum)},
             {"seminorm_sq", labeled_exact(e.seminorm_sq)}};
    emit(doc, out_path);
    return 2;
  }
  doc["in_gradient_space"] = true;
  emit(doc, out_path);
  return 0;
}

// --- static ----------------------------------------------------------------

Json kernel_static_doc(const ExchangeKernel& k) {
  const StaticQuadResult q = static_quadrature(k);
  return Json{{"temperature", k.marginal()->temperature()},
              {"chi", labeled_exact(q.chi)},
              {"dirichlet", labeled_quadrature(q.dirichlet, q.error)},
              {"Ds", labeled_quadrature(q.Ds, 2.0 * q.error / q.chi)},
              {"nodes", q.nodes}};
}

int run_static(const ModelOpts& mo, RunOpts& ro, const std::vector<double>& t_grid) {
  Json doc{{"command", "static"}};
  if (!mo.model.empty() && !ro.kernel.empty())
    throw InputError("choose either a lattice model or an exchange kernel, not both");
  if (!ro.kernel.empty()) {
    if (t_grid.empty()) {
      const ExchangeKernel k =
          kernel_from_json(Json(ro.kernel), ro.shape, ro.temperature);
      doc["system"] = kernel_doc(k);
      doc["result"] = kernel_static_doc(k);
    } else {
      Json table = Json::array();
      for (double T : t_grid)
        table.push_back(
            kernel_static_doc(kernel_from_json(Json(ro.kernel), ro.shape, T)));
      doc["system"] = Json{{"kernel", ro.kernel}, {"shape", ro.shape}};
      doc["table"] = table;
    }
  } else if (!mo.model.empty()) {
    if (!t_grid.empty())
      throw InputError("--T-grid applies to exchange kernels only");
    const BondGenerator model = build_model(mo);
    const StaticResult s = static_D(model);
    doc["system"] = model_doc(mo);
    Json rows = Json::array();
    for (int a = 0; a < model.dim(); ++a) {
      Json row = Json::array();
      for (int b = 0; b < model.dim(); ++b) row.push_back(s.Ds(a, b));
      rows.push_back(row);
    }
    doc["result"] = Json{{"rho", labeled_exact(s.rho)},
                         {"chi", labeled_exact(s.chi)},
                         {"Ds", labeled_exact(s.Ds(0, 0))},
                         {"Ds_matrix", rows}};
  } else {
    throw InputError("static needs --model or --kernel");
  }
  emit(doc, ro.out_path);
  return 0;
}

// --- variational -----------------------------------------------------------

int run_variational(const ModelOpts& mo, int max_radius,
                    std::vector<double> direction, const std::string& out_path) {
  if (mo.model.empty()) throw InputError("variational needs --model");
  const BondGenerator model = build_model(mo);
  if (direction.empty()) {
    direction.assign(model.dim(), 0.0);
    direction[0] = 1.0;
  }
  if (max_radius < 1) throw InputError("--radius must be at least 1");
  Json by_radius = Json::array();
  VariationalResult last;
  double best = 0.0;
  for (int r = 1; r <= max_radius; ++r) {
    last = minimize(model, direction, r);
    best = r == 1 ? last.D_dir : std::min(best, last.D_dir);
    by_radius.push_back(Json{{"radius", r},
                             {"correction", labeled_exact(last.correction)},
                             {"span_dim", last.span_dim},
                             {"kernel_dim", last.kernel_dim}});
  }
  Json doc{{"command", "variational"},
           {"system", model_doc(mo)},
           {"direction", direction},
           {"Ds", labeled_exact(last.Ds_dir)},
           {"chi", labeled_exact(last.chi)},
           {"correction_by_radius", by_radius},
           {"D_upper_bound", labeled_exact(best)},
           {"span_dim", last.span_dim},
           {"kernel_dim", last.kernel_dim}};
  emit(doc, out_path);
  return 0;
}

// --- simulate / green-kubo ---------------------------------------------------

struct System {
  std::optional<BondGenerator> model;
  std::optional<ExchangeKernel> kernel;
  Json doc;
};

System build_system(const ModelOpts& mo, const RunOpts& ro) {
  System s;
  if (!ro.kernel_spec.is_null()) {
    s.kernel = kernel_from_json(ro.kernel_spec, ro.shape, ro.temperature);
    s.doc = kernel_doc(*s.kernel);
  } else {
    s.model = build_model(mo);
    s.doc = model_doc(mo);
  }
  return s;
}

Json run_doc(const RunOpts& ro) {
  return Json{{"N", ro.N},
              {"t_max", ro.t_max},
              {"trajectories", ro.trajectories},
              {"seed", ro.seed},
              {"lag_count", ro.lag_count}};
}

int run_simulate(const ModelOpts& mo, RunOpts& ro) {
  const System sys = build_system(mo, ro);
  const std::vector<double> lags = uniform_lags(ro.t_max, ro.lag_count);
  const TrajectorySet traj =
      sys.kernel ? simulate(*sys.kernel, ro.N, lags, ro.trajectories, ro.seed,
                            ro.threads)
                 : simulate(*sys.model, ro.N, lags, ro.trajectories, ro.seed,
                            ro.threads);
  const CorrelationSeries series = estimate_S(traj);
  const SpreadingEstimate spread = moment_spreading_D(series);
  Json warnings = Json::array();
  if (!spread.warning.empty()) warnings.push_back(spread.warning);
  Json doc{{"command", "simulate"},
           {"system", sys.doc},
           {"run", run_doc(ro)},
           {"rho", labeled_exact(traj.rho)},
           {"chi", labeled_exact(traj.chi)},
           {"spreading_D", labeled_monte_carlo(spread.D, spread.se)},
           {"fit", Json{{"r2", spread.r2}, {"window_begin", spread.window_begin}}},
           {"sum_rule",
            Json{{"final_lag_sum", labeled_monte_carlo(series.sum_values.back(),
                                                       series.sum_se.back())},
                 {"expected", labeled_exact(traj.chi)}}},
           {"max_conservation_drift", traj.max_conservation_drift}};
  if (sys.kernel) {
    const KSResult ks = ks_stationarity(traj, *sys.kernel->marginal());
    doc["stationarity"] = Json{{"ks_statistic", ks.statistic},
                               {"p_value", ks.p_value},
                               {"samples", ks.samples}};
  }
  doc["warnings"] = warnings;
  emit(doc, ro.out_path);
  emit_csv(series, ro.csv_path);
  return 0;
}

int run_green_kubo(const ModelOpts& mo, RunOpts& ro) {
  const System sys = build_system(mo, ro);
  const std::vector<double> lags = uniform_lags(ro.t_max, ro.lag_count);
  const TrajectorySet traj =
      sys.kernel ? simulate(*sys.kernel, ro.N, lags, ro.trajectories, ro.seed,
                            ro.threads)
                 : simulate(*sys.model, ro.N, lags, ro.trajectories, ro.seed,
                            ro.threads);

  std::function<double(double, double)> j;
  if (sys.kernel) {
    const ExchangeKernel* k = &*sys.kernel;
    j = [k](double a, double b) { return k->pair_current(a, b); };
  } else {
    j = lattice_pair_current(*sys.model);
  }
  const GKEstimate gk = integrate_gk(current_autocorrelation(traj, j));
  const SpreadingEstimate spread = moment_spreading_D(estimate_S(traj));

  Json Ds_labeled;
  double Ds = 0.0;
  if (sys.kernel) {
    const StaticQuadResult q = static_quadrature(*sys.kernel);
    Ds = q.Ds;
    Ds_labeled = labeled_quadrature(q.Ds, 2.0 * q.error / q.chi);
  } else {
    Ds = static_D(*sys.model).Ds(0, 0);
    Ds_labeled = labeled_exact(Ds);
  }
  const DiffusionEstimate est = make_diffusion_estimate(Ds, gk, spread);

  Json doc{{"command", "green-kubo"},
           {"system", sys.doc},
           {"estimate", diffusion_to_json(est, Ds_labeled)},
           {"green_kubo",
            Json{{"C0", labeled_monte_carlo(gk.series.values.front(),
                                            gk.series.se.front())},
                 {"integral", labeled_monte_carlo(gk.integral, gk.integral_se)},
                 {"tail", labeled_monte_carlo(gk.tail, gk.tail_se)},
                 {"correction",
                  labeled_monte_carlo(gk.correction, gk.correction_se)},
                 {"chi", labeled_exact(gk.chi)}}}};
  if (sys.kernel) {
    const KSResult ks = ks_stationarity(traj, *sys.kernel->marginal());
    doc["stationarity"] = Json{{"ks_statistic", ks.statistic},
                               {"p_value", ks.p_value},
                               {"samples", ks.samples}};
  }
  emit(doc, ro.out_path);
  emit_csv(gk.series, ro.csv_path);
  return 0;
}

int run_selftest_cmd(bool inject, const std::string& out_path) {
  const SelfTestReport rep = run_selftest(inject);
  std::ostringstream os;
  for (const auto& c : rep.cases)
    os << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
       << (c.detail.empty() ? "" : ": " + c.detail) << "\n";
  os << (rep.all_pass() ? "selftest: all checks passed"
                        : "selftest: at least one check failed")
     << "\n";
  if (out_path.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(out_path);
    if (!f) throw InputError("cannot write '" + out_path + "'");
    f << os.str();
  }
  return rep.all_pass() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Gradient-condition tools for conservative lattice dynamics: membership "
      "checks, exact decompositions, static and variational diffusivity "
      "bounds, and Monte Carlo estimates of the dynamical correction.\n"
      "CSV output always has the fixed columns lag,C,SE; JSON reports label "
      "every number as exact, quadrature (+error) or monte-carlo (+se)."};
  app.require_subcommand(1);
  int rc = 0;

  ModelOpts cg_model;
  std::string cg_function, cg_out;
  auto* cg = app.add_subcommand(
      "check-gradient",
      "Decide whether a model current (or a local function from --function) "
      "lies in the gradient space; exit 0 if yes, 2 with a witness if not");
  add_model_flags(cg, cg_model);
  cg->add_option("--function", cg_function, "local function JSON file");
  cg->add_option("--out", cg_out, "write the JSON report here instead of stdout");
  cg->callback([&] { rc = run_check_gradient(cg_model, cg_function, cg_out); });

  ModelOpts dc_model;
  std::string dc_function, dc_out;
  auto* dc = app.add_subcommand(
      "decompose",
      "Write the telescoping decomposition of a gradient function; exit 2 "
      "with a witness when the input is not a gradient");
  add_model_flags(dc, dc_model);
  dc->add_option("--function", dc_function, "local function JSON file");
  dc->add_option("--out", dc_out, "write the JSON report here instead of stdout");
  dc->callback([&] { rc = run_decompose(dc_model, dc_function, dc_out); });

  ModelOpts st_model;
  RunOpts st_run;
  std::vector<double> st_grid;
  auto* st = app.add_subcommand(
      "static", "Static diffusivity: exact bond sums for lattice models, "
                "adaptive quadrature for exchange kernels");
  add_model_flags(st, st_model);
  st->add_option("--kernel", st_run.kernel,
                 "exchange kernel: uniform, sqrt_rate or zero");
  st->add_option("--shape", st_run.shape, "gamma marginal shape (default 1)");
  st->add_option("--temperature", st_run.temperature,
                 "gamma marginal temperature (default 1)");
  st->add_option("--T-grid", st_grid, "temperatures for a D(T) table")
      ->delimiter(',');
  st->add_option("--out", st_run.out_path,
                 "write the JSON report here instead of stdout");
  st->callback([&] { rc = run_static(st_model, st_run, st_grid); });

  ModelOpts va_model;
  int va_radius = 2;
  std::vector<double> va_direction;
  std::string va_out;
  auto* va = app.add_subcommand(
      "variational", "Upper bounds on the diffusivity from finite-radius test "
                     "functions, with the correction per radius");
  add_model_flags(va, va_model);
  va->add_option("--radius", va_radius, "largest test-function radius (default 2)");
  va->add_option("--direction", va_direction, "direction vector (default e_0)")
      ->delimiter(',');
  va->add_option("--out", va_out, "write the JSON report here instead of stdout");
  va->callback([&] { rc = run_variational(va_model, va_radius, va_direction, va_out); });

  ModelOpts si_model;
  RunOpts si_run;
  auto* si = app.add_subcommand(
      "simulate", "Sample equilibrium trajectories on a ring and report the "
                  "space-time correlation, its sum rule and the spreading "
                  "diffusivity");
  add_run_flags(si, si_model, si_run);
  si->callback([&] {
    merge_config(si, si_model, si_run);
    rc = run_simulate(si_model, si_run);
  });

  ModelOpts gk_model;
  RunOpts gk_run;
  auto* gk = app.add_subcommand(
      "green-kubo", "Estimate the dynamical correction from the current "
                    "autocorrelation and combine it with the static part");
  add_run_flags(gk, gk_model, gk_run);
  gk->callback([&] {
    merge_config(gk, gk_model, gk_run);
    rc = run_green_kubo(gk_model, gk_run);
  });

  bool inject = false;
  std::string self_out;
  auto* se = app.add_subcommand(
      "selftest", "Run the built-in consistency battery; exit 3 on any failure");
  se->add_flag("--inject-asymmetric-kernel", inject,
               "feed a detailed-balance-violating kernel into the battery "
               "(the run must then fail)");
  se->add_option("--out", self_out, "write the report here instead of stdout");
  se->callback([&] { rc = run_selftest_cmd(inject, self_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
