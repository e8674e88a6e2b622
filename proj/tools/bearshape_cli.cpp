#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bearshape/experiment.hpp"
#include "bearshape/io.hpp"

namespace fs = std::filesystem;
using namespace bearshape;
using io::json;

namespace {

struct Common {
  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string leaders;
  bool bump = false;
  bool fixed_step = false;
  double horizon = 100.0;
  std::optional<int> test_ics;
  int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--scenario", c.scenario_path, "Scenario JSON (defaults: 5-agent pentagon, box [-5,5]^2)");
  app->add_option("--seed", c.seed, "Override the scenario seed");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--leaders", c.leaders, "Agents held fixed during evaluation, e.g. 0,1");
  app->add_flag("--bump", c.bump, "Multiply the control by the collision bump weight");
  app->add_flag("--fixed-step", c.fixed_step, "Fixed-step RK4 instead of the adaptive integrator");
  app->add_option("--horizon", c.horizon, "Simulation horizon T");
  app->add_option("--test-ics", c.test_ics, "Override the number of test initial conditions");
  app->add_option("--threads", c.threads, "Worker threads (0 = hardware)");
}

std::vector<int> parse_indices(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kInvalidArgument, "bad agent index '" + item + "'");
    }
  }
  return out;
}

/// {"agents", "shape": "equilateral"|"perturbed", "radius", "box_half_width", "train_count", "test_count",
///  "seed", "perturbation", "formation": <formation spec>}; every field optional.
Scenario load_scenario(const Common& c) {
  ScenarioOptions o;
  std::optional<FormationSpec> custom;
  if (!c.scenario_path.empty()) {
    const json j = io::read_json_file(c.scenario_path);
    try {
      o.agents = j.value("agents", o.agents);
      o.radius = j.value("radius", o.radius);
      o.box_half_width = j.value("box_half_width", o.box_half_width);
      o.train_count = j.value("train_count", o.train_count);
      o.test_count = j.value("test_count", o.test_count);
      o.seed = j.value("seed", o.seed);
      o.perturbation = j.value("perturbation", o.perturbation);
      const std::string shape = j.value("shape", std::string("equilateral"));
      if (shape == "perturbed") o.shape = PolygonShape::kPerturbed;
      else if (shape != "equilateral") throw Error(ErrorCode::kParse, "unknown shape '" + shape + "'");
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParse, std::string("scenario: ") + e.what());
    }
    if (j.contains("formation")) custom = io::spec_from_json(j["formation"]);
  }
  if (c.seed) o.seed = *c.seed;
  if (c.test_ics) o.test_count = *c.test_ics;
  return custom ? gen_scenario(*custom, o) : gen_scenario(o);
}

ExperimentOptions experiment_options(const Common& c) {
  ExperimentOptions o;
  o.sim.horizon = c.horizon;
  if (c.fixed_step) o.sim.integrator = Integrator::kFixedRK4;
  if (c.bump) o.sim.bump = BumpConfig{};
  o.eval_leaders = parse_indices(c.leaders);
  o.threads = c.threads;
  return o;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

json report_summary(const EvalReport& r) {
  json j = io::report_to_json(r);
  j.erase("trials");
  return j;
}

int run_simulate(const Common& c, const std::string& case_name, const std::string& params_path, int trial) {
  const auto sc = load_scenario(c);
  const auto opts = experiment_options(c);
  if (trial < 0 || trial >= static_cast<int>(sc.ic_test.size()))
    throw Error(ErrorCode::kInvalidArgument, "trial index outside the test set");
  ControllerConfig ctrl = case_controller(sc.spec, {edge_case_from_string(case_name), 1, {}}, opts.knots,
                                          range_span_for(sc, opts));
  if (!params_path.empty()) ctrl.params = io::params_from_json(io::read_json_file(params_path));
  ctrl.leaders = opts.eval_leaders;
  ctrl.validate();
  const auto rec = simulate(ctrl, place_leaders(sc.ic_test[trial], ctrl.spec, ctrl.leaders), opts.sim, false);
  const fs::path csv = fs::path(c.out) / ("traj_" + std::to_string(trial) + ".csv");
  io::write_trajectory(csv, rec);
  print({{"trajectory", csv.string()},
         {"L_path", metric_L_path(rec)},
         {"L_diff", metric_L_diff(rec)},
         {"final_scale", metric_scale(rec.terminal_state())},
         {"reached_shape", reached_shape(rec, ctrl.spec, opts.convergence_tol)},
         {"guard_events", rec.events.size()},
         {"steps", rec.steps}});
  return 0;
}

int run_fit_init(const Common& c, const std::string& case_name) {
  const auto sc = load_scenario(c);
  const auto opts = experiment_options(c);
  const auto ctrl = case_controller(sc.spec, {edge_case_from_string(case_name), 1, {}}, opts.knots,
                                    range_span_for(sc, opts));
  const auto constraints = build_constraints(ctrl.params);
  const fs::path path = fs::path(c.out) / "params_init.json";
  io::write_json_file(path, io::params_to_json(ctrl.params));
  print({{"params", path.string()},
         {"num_params", ctrl.params.num_params()},
         {"constraint_violation", constraints.violation(ctrl.params.alpha())}});
  return 0;
}

int run_train(const Common& c, const std::string& case_name, int train_ics, int max_iterations, bool verbose) {
  auto sc = load_scenario(c);
  auto opts = experiment_options(c);
  opts.solver.max_iterations = max_iterations;
  if (verbose) opts.solver.on_iteration = [](int k, double f) { std::cerr << "iteration " << k << " objective " << f << std::endl; };
  const CaseSpec cs{edge_case_from_string(case_name), train_ics, {}};
  const auto res = run_experiment(sc, {cs}, opts, c.out);
  const auto& r = res.cases.front();
  if (!r.ok) throw Error(ErrorCode::kInvalidArgument, r.error);
  print({{"case", cs.label()},
         {"out", (fs::path(c.out) / cs.label()).string()},
         {"status", to_string(r.optimization.status)},
         {"iterations", r.optimization.iterations},
         {"objective_initial", r.optimization.objective_history.front()},
         {"objective_final", r.optimization.objective_history.back()},
         {"train", report_summary(r.train)},
         {"test", report_summary(r.test)}});
  return 0;
}

int run_evaluate(const Common& c, const std::string& case_name, const std::string& params_path) {
  const auto sc = load_scenario(c);
  const auto opts = experiment_options(c);
  const auto trained = io::params_from_json(io::read_json_file(params_path));
  ControllerConfig ctrl = case_controller(sc.spec, {edge_case_from_string(case_name), 1, {}}, opts.knots,
                                          range_span_for(sc, opts));
  if (trained.num_params() != ctrl.params.num_params())
    throw Error(ErrorCode::kInvalidArgument, "parameter file does not match the case's parameter layout");
  // The trained grids replace the defaults so alpha is read against the grid it was trained on.
  ctrl.params = ReshapingParams(
      QuadraticSpline(trained.bearing().grid(), fit_initial_params(initial_bearing_shape, trained.bearing().grid())),
      trained.has_range() ? std::optional<QuadraticSpline>(QuadraticSpline(
                                trained.range().grid(), fit_initial_params(initial_range_shape, trained.range().grid())))
                          : std::nullopt);
  ctrl.validate();
  TrajectoryRecord init, opt;
  const auto report = evaluate_params("evaluate", ctrl, trained.alpha(), sc.ic_test, opts, &init, &opt);
  const fs::path out(c.out);
  io::write_json_file(out / "report.json", io::report_to_json(report));
  io::write_text_file(out / "report.csv", io::report_csv(report));
  if (!report.trials.empty() && !report.trials.front().failed) {
    io::write_trajectory(out / "init" / "traj_0.csv", init);
    io::write_trajectory(out / "opt" / "traj_0.csv", opt);
  }
  print(report_summary(report));
  return 0;
}

/// Collects every report.json below the output directory into one table.
int run_report(const Common& c) {
  const fs::path root(c.out);
  if (!fs::is_directory(root)) throw Error(ErrorCode::kIo, "no such directory " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::ostringstream csv;
  csv << "report,trials,failed,delta_path_mean,delta_path_median,delta_diff_mean,delta_diff_median,"
         "improvement_fraction,scale_ratio\n";
  json rows = json::array();
  auto num = [](const json& v) { return v.is_null() ? std::string("") : v.dump(); };
  for (const auto& f : files) {
    const json j = io::read_json_file(f);
    const std::string name = fs::relative(f.parent_path(), root).string();
    const double si = j.value("mean_scale_init_final", 0.0), so = j.value("mean_scale_opt_final", 0.0);
    const json ratio = si > 0.0 ? json(so / si) : json(nullptr);
    csv << name << ',' << j["trials"].size() << ',' << j.value("failed", 0) << ',' << num(j["delta_path"]["mean"]) << ','
        << num(j["delta_path"]["median"]) << ',' << num(j["delta_diff"]["mean"]) << ','
        << num(j["delta_diff"]["median"]) << ',' << j.value("improvement_fraction", 0.0) << ',' << num(ratio) << '\n';
    rows.push_back({{"report", name},
                    {"delta_path", j["delta_path"]},
                    {"delta_diff", j["delta_diff"]},
                    {"improvement_fraction", j["improvement_fraction"]},
                    {"scale_ratio", ratio}});
  }
  io::write_text_file(root / "summary.csv", csv.str());
  print(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimized bearing formation control: simulation, training and evaluation"};
  app.require_subcommand(1);
  Common common;
  std::string case_name = "NoEd";
  std::string params_path;
  int train_ics = 7;
  int trial = 0;
  int max_iterations = SolverOptions{}.max_iterations;
  bool verbose = false;

  auto* sim = app.add_subcommand("simulate", "Simulate one test initial condition and export the trajectory");
  add_common(sim, common);
  sim->add_option("--case", case_name, "NoEd, OneEd, SomeEd or FullEd");
  sim->add_option("--params", params_path, "Parameter JSON (default: initial functions)");
  sim->add_option("--trial", trial, "Test IC index");

  auto* fit = app.add_subcommand("fit-init", "Write the initial reshaping parameters");
  add_common(fit, common);
  fit->add_option("--case", case_name, "NoEd, OneEd, SomeEd or FullEd");

  auto* train = app.add_subcommand("train", "Optimize on training ICs and evaluate on test ICs");
  add_common(train, common);
  train->add_option("--case", case_name, "NoEd, OneEd, SomeEd or FullEd");
  train->add_option("--train-ics", train_ics, "Number of training initial conditions");
  train->add_option("--max-iterations", max_iterations, "Solver iteration cap");
  train->add_flag("-v,--verbose", verbose, "Print the objective after every iteration");

  auto* eval = app.add_subcommand("evaluate", "Compare initial and given parameters on the test ICs");
  add_common(eval, common);
  eval->add_option("--case", case_name, "NoEd, OneEd, SomeEd or FullEd");
  eval->add_option("--params", params_path, "Parameter JSON")->required();

  auto* report = app.add_subcommand("report", "Tabulate every report.json under --out");
  report->add_option("--out", common.out, "Directory to scan");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print({{"error", "invalid_argument"}, {"message", e.what()}});
    return 2;
  }

  try {
    if (*sim) return run_simulate(common, case_name, params_path, trial);
    if (*fit) return run_fit_init(common, case_name);
    if (*train) return run_train(common, case_name, train_ics, max_iterations, verbose);
    if (*eval) return run_evaluate(common, case_name, params_path);
    if (*report) return run_report(common);
  } catch (const Error& e) {
    print(io::error_to_json(e));
    return 1;
  } catch (const std::exception& e) {
    print({{"error", "internal"}, {"message", e.what()}});
    return 1;
  }
  return 0;
}
