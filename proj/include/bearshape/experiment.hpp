#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bearshape/controller.hpp"
#include "bearshape/error.hpp"
#include "bearshape/io.hpp"
#include "bearshape/metrics.hpp"
#include "bearshape/optimizer.hpp"
#include "bearshape/scenario.hpp"
#include "bearshape/simulator.hpp"

namespace bearshape {

enum class EdgeCase { kNoEd, kOneEd, kSomeEd, kFullEd };

inline const char* to_string(EdgeCase c) {
  switch (c) {
    case EdgeCase::kNoEd: return "NoEd";
    case EdgeCase::kOneEd: return "OneEd";
    case EdgeCase::kSomeEd: return "SomeEd";
    case EdgeCase::kFullEd: return "FullEd";
  }
  return "?";
}

inline EdgeCase edge_case_from_string(const std::string& s) {
  for (auto c : {EdgeCase::kNoEd, EdgeCase::kOneEd, EdgeCase::kSomeEd, EdgeCase::kFullEd})
    if (s == to_string(c)) return c;
  throw Error(ErrorCode::kInvalidArgument, "unknown case '" + s + "' (NoEd, OneEd, SomeEd, FullEd)");
}

/// OneEd: the first bearing edge. SomeEd: three edges spread evenly over the sorted bearing edges
/// (all of them when there are fewer than four).
inline std::vector<Edge> default_range_edges(EdgeCase c, const FormationSpec& spec) {
  const auto all = spec.graph().undirected_bearing_edges();
  switch (c) {
    case EdgeCase::kNoEd: return {};
    case EdgeCase::kOneEd: return {all.front()};
    case EdgeCase::kSomeEd: {
      if (all.size() < 4) return all;
      std::vector<Edge> out;
      for (std::size_t k = 0; k < 3; ++k) out.push_back(all[k * all.size() / 3]);
      return out;
    }
    case EdgeCase::kFullEd: return all;
  }
  return {};
}

struct CaseSpec {
  EdgeCase kind = EdgeCase::kNoEd;
  int train_ics = 7;
  /// Overrides default_range_edges.
  std::optional<std::vector<Edge>> range_edges;

  std::string label() const { return std::string(to_string(kind)) + "-" + std::to_string(train_ics); }
};

struct ExperimentOptions {
  SimConfig sim = [] {
    SimConfig s;
    s.horizon = 100.0;
    return s;
  }();
  SolverOptions solver;
  double omega = 1000.0;
  int knots = 7;
  /// Range spline grid is [-span, span]; <= 0 means twice the sampling box half-width.
  double range_half_span = 0.0;
  /// Agents held fixed during evaluation only; training is always leaderless.
  std::vector<int> eval_leaders;
  /// Relative (to the final diameter) residual for the per-trial convergence flag.
  double convergence_tol = 1e-3;
  int threads = 0;
};

inline ControllerConfig case_controller(const FormationSpec& base, const CaseSpec& c, int knots,
                                        double range_half_span = 10.0) {
  const auto edges = c.range_edges ? *c.range_edges : default_range_edges(c.kind, base);
  return ControllerConfig(base.with_range_edges(edges),
                          ReshapingParams::initial(knots, !edges.empty(), knots, range_half_span));
}

inline double range_span_for(const Scenario& sc, const ExperimentOptions& opts) {
  if (opts.range_half_span > 0.0) return opts.range_half_span;
  return (sc.box.hi - sc.box.lo).maxCoeff();
}

inline bool reached_shape(const TrajectoryRecord& rec, const FormationSpec& spec, double rel_tol) {
  const auto& xt = rec.terminal_state();
  const double diam = xt.diameter();
  if (!(diam > 0.0)) return false;
  try {
    return is_similar(xt, spec.desired(), rel_tol * diam).matches;
  } catch (const Error&) {
    return false;
  }
}

/// Leader agents start (and stay) at their desired positions; followers keep their sampled ones.
inline Configuration place_leaders(const Configuration& x0, const FormationSpec& spec, const std::vector<int>& leaders) {
  if (leaders.empty()) return x0;
  Mat p = x0.positions();
  for (int l : leaders) p.col(l) = spec.desired().positions().col(l);
  return Configuration(std::move(p));
}

/// Simulates every IC with both parameter sets. The first IC's trajectories are returned through
/// `first_init` / `first_opt` when given.
inline EvalReport evaluate_params(const std::string& label, const ControllerConfig& ctrl_init, const Vec& alpha_opt,
                                  const std::vector<Configuration>& ics, const ExperimentOptions& opts,
                                  TrajectoryRecord* first_init = nullptr, TrajectoryRecord* first_opt = nullptr) {
  ControllerConfig a = ctrl_init;
  a.leaders = opts.eval_leaders;
  a.validate();
  const ControllerConfig b = a.with_alpha(alpha_opt);
  std::vector<TrialMetrics> trials(ics.size());
  detail::parallel_for(static_cast<int>(ics.size()), opts.threads, [&](int k) {
    try {
      const Configuration x0 = place_leaders(ics[k], a.spec, a.leaders);
      const auto ri = simulate(a, x0, opts.sim, false);
      const auto ro = simulate(b, x0, opts.sim, false);
      trials[k] = trial_metrics(k, ri, ro);
      trials[k].converged_init = reached_shape(ri, a.spec, opts.convergence_tol);
      trials[k].converged_opt = reached_shape(ro, b.spec, opts.convergence_tol);
      if (k == 0) {
        if (first_init) *first_init = ri;
        if (first_opt) *first_opt = ro;
      }
    } catch (const Error& e) {
      trials[k].trial = k;
      trials[k].failed = true;
      trials[k].error = e.what();
    }
  });
  return aggregate(label, std::move(trials));
}

struct CaseResult {
  CaseSpec spec;
  bool ok = false;
  std::string error;
  ControllerConfig ctrl;  // initial parameters, training graph
  OptimizationResult optimization;
  EvalReport test;
  /// Initial vs optimized on the training ICs themselves.
  EvalReport train;
};

struct ExperimentResult {
  std::vector<CaseResult> cases;
  const CaseResult* find(EdgeCase kind, int train_ics) const {
    for (const auto& c : cases)
      if (c.spec.kind == kind && c.spec.train_ics == train_ics) return &c;
    return nullptr;
  }
};

inline void write_case_outputs(const std::filesystem::path& dir, const CaseResult& r, const TrajectoryRecord* init,
                               const TrajectoryRecord* opt) {
  io::write_json_file(dir / "report.json", io::report_to_json(r.test));
  io::write_text_file(dir / "report.csv", io::report_csv(r.test));
  io::write_json_file(dir / "train_report.json", io::report_to_json(r.train));
  io::write_json_file(dir / "params_init.json", io::params_to_json(r.ctrl.params));
  io::write_json_file(dir / "params_opt.json", io::params_to_json(r.ctrl.params.with_alpha(r.optimization.alpha_opt)));
  io::write_json_file(dir / "optimization.json", io::optimization_to_json(r.optimization));
  io::write_text_file(dir / "history.csv", io::history_csv(r.optimization));
  if (init) io::write_trajectory(dir / "init" / "traj_0.csv", *init);
  if (opt) io::write_trajectory(dir / "opt" / "traj_0.csv", *opt);
}

/// Per case: initial parameters, training on the first train_ics training ICs, evaluation of the initial
/// and optimized parameters on the test ICs. A failing case is recorded and the others still run.
/// Outputs go to out_dir/<label>/ when out_dir is non-empty.
inline ExperimentResult run_experiment(const Scenario& scenario, const std::vector<CaseSpec>& cases,
                                       const ExperimentOptions& opts, const std::filesystem::path& out_dir = {}) {
  ExperimentResult result;
  io::json summary = io::json::array();
  for (const auto& c : cases) {
    CaseResult r;
    r.spec = c;
    try {
      if (c.train_ics < 1 || c.train_ics > static_cast<int>(scenario.ic_train.size()))
        throw Error(ErrorCode::kInvalidArgument, "case " + c.label() + " asks for more training ICs than the scenario has");
      r.ctrl = case_controller(scenario.spec, c, opts.knots, range_span_for(scenario, opts));
      const std::vector<Configuration> train(scenario.ic_train.begin(), scenario.ic_train.begin() + c.train_ics);
      TrainingProblem problem(r.ctrl, train, opts.sim);
      problem.omega = opts.omega;
      SolverOptions so = opts.solver;
      if (so.threads == 0) so.threads = opts.threads;
      r.optimization = optimize(problem, so);
      TrajectoryRecord first_init, first_opt;
      r.test = evaluate_params(c.label(), r.ctrl, r.optimization.alpha_opt, scenario.ic_test, opts, &first_init,
                               &first_opt);
      r.train = evaluate_params(c.label() + "/train", r.ctrl, r.optimization.alpha_opt, train, opts);
      r.ok = true;
      if (!out_dir.empty()) {
        const bool have = !r.test.trials.empty() && !r.test.trials.front().failed;
        write_case_outputs(out_dir / c.label(), r, have ? &first_init : nullptr, have ? &first_opt : nullptr);
      }
    } catch (const Error& e) {
      r.ok = false;
      r.error = std::string(to_string(e.code())) + ": " + e.what();
    }
    io::json row = {{"case", c.label()}, {"ok", r.ok}};
    if (r.ok) {
      row["status"] = to_string(r.optimization.status);
      row["test_delta_path"] = io::summary_to_json(r.test.delta_path);
      row["test_delta_diff"] = io::summary_to_json(r.test.delta_diff);
      row["test_improvement_fraction"] = r.test.improvement_fraction;
      row["train_delta_path"] = io::summary_to_json(r.train.delta_path);
    } else {
      row["error"] = r.error;
    }
    summary.push_back(row);
    result.cases.push_back(std::move(r));
  }
  if (!out_dir.empty()) io::write_json_file(out_dir / "summary.json", summary);
  return result;
}

}  // namespace bearshape
