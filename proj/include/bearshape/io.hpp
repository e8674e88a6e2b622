#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "bearshape/error.hpp"
#include "bearshape/formation.hpp"
#include "bearshape/metrics.hpp"
#include "bearshape/optimizer.hpp"
#include "bearshape/reshaping.hpp"
#include "bearshape/simulator.hpp"

namespace bearshape::io {

using json = nlohmann::json;

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline std::vector<Edge> edges_from_json(const json& j) {
  std::vector<Edge> edges;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw Error(ErrorCode::kParse, "edge must be a pair of indices");
    edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return edges;
}

inline json edges_to_json(const std::vector<Edge>& edges) {
  json out = json::array();
  for (const auto& e : edges) out.push_back({e.i, e.j});
  return out;
}

/// {"n": dim, "agents": N, "bearing_edges": [[i,j],...], "range_edges": [...], "desired": [[x,y],...]}
inline FormationSpec spec_from_json(const json& j) {
  try {
    const int dim = j.at("n").get<int>();
    const int agents = j.at("agents").get<int>();
    const auto& desired = j.at("desired");
    if (static_cast<int>(desired.size()) != agents) throw Error(ErrorCode::kParse, "desired has wrong agent count");
    Mat p(dim, agents);
    for (int i = 0; i < agents; ++i) {
      if (static_cast<int>(desired[i].size()) != dim) throw Error(ErrorCode::kParse, "desired position has wrong dimension");
      for (int d = 0; d < dim; ++d) p(d, i) = desired[i][d].get<double>();
    }
    const auto range = j.contains("range_edges") ? edges_from_json(j["range_edges"]) : std::vector<Edge>{};
    return FormationSpec(FormationGraph(agents, edges_from_json(j.at("bearing_edges")), range), Configuration(p));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("formation spec: ") + e.what());
  }
}

inline json spec_to_json(const FormationSpec& spec) {
  json desired = json::array();
  for (int i = 0; i < spec.num_agents(); ++i) {
    json row = json::array();
    for (int d = 0; d < spec.dim(); ++d) row.push_back(spec.desired().positions()(d, i));
    desired.push_back(row);
  }
  return {{"n", spec.dim()},
          {"agents", spec.num_agents()},
          {"bearing_edges", edges_to_json(spec.graph().undirected_bearing_edges())},
          {"range_edges", edges_to_json(spec.graph().undirected_range_edges())},
          {"desired", desired}};
}

inline json vec_to_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json spline_to_json(const QuadraticSpline& s) {
  return {{"grid", {{"k", s.grid().size()}, {"span", {s.grid().lo(), s.grid().hi()}}}}, {"alpha", vec_to_json(s.alpha())}};
}

inline QuadraticSpline spline_from_json(const json& j) {
  try {
    const auto& g = j.at("grid");
    const SplineGrid grid(g.at("span")[0].get<double>(), g.at("span")[1].get<double>(), g.at("k").get<int>());
    const Vec alpha = vec_from_json(j.at("alpha"));
    if (alpha.size() != QuadraticSpline::num_params(grid)) throw Error(ErrorCode::kParse, "alpha has wrong length");
    return QuadraticSpline(grid, alpha);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("spline: ") + e.what());
  }
}

/// Doubles are written in shortest round-trip form, so a save/load cycle is bit-exact.
inline json params_to_json(const ReshapingParams& p) {
  json j = {{"bearing", spline_to_json(p.bearing())}};
  if (p.has_range()) j["range"] = spline_to_json(p.range());
  return j;
}

inline ReshapingParams params_from_json(const json& j) {
  if (!j.contains("bearing")) throw Error(ErrorCode::kParse, "parameters need a bearing spline");
  std::optional<QuadraticSpline> range;
  if (j.contains("range")) range = spline_from_json(j["range"]);
  return ReshapingParams(spline_from_json(j["bearing"]), range);
}

/// Header `t,agent,x,y[,...]`, one row per agent per recorded time.
inline std::string trajectory_csv(const TrajectoryRecord& rec) {
  std::ostringstream out;
  out << std::setprecision(17);
  const int dim = rec.states.empty() ? 2 : static_cast<int>(rec.states.front().rows());
  static const char* names[] = {"x", "y", "z"};
  out << "t,agent";
  for (int d = 0; d < dim; ++d) out << ',' << (d < 3 ? names[d] : ("x" + std::to_string(d)).c_str());
  out << '\n';
  for (std::size_t k = 0; k < rec.times.size(); ++k) {
    const Mat& s = rec.states[k];
    for (int i = 0; i < s.cols(); ++i) {
      out << rec.times[k] << ',' << i;
      for (int d = 0; d < dim; ++d) out << ',' << s(d, i);
      out << '\n';
    }
  }
  return out.str();
}

inline json trajectory_sidecar(const TrajectoryRecord& rec) {
  json events = json::array();
  for (const auto& e : rec.events)
    events.push_back({{"time", e.time},
                      {"agent_i", e.agent_i},
                      {"agent_j", e.agent_j},
                      {"distance_before", e.distance_before},
                      {"distance_after", e.distance_after},
                      {"euler_step", e.euler_step}});
  return {{"events", events},
          {"path_lengths", vec_to_json(rec.path_lengths.back())},
          {"total_path_length", rec.total_path_length()},
          {"terminal_cost", rec.terminal_cost},
          {"exited_early", rec.exited_early},
          {"exit_time", rec.exit_time},
          {"steps", rec.steps}};
}

inline void write_trajectory(const std::filesystem::path& csv_path, const TrajectoryRecord& rec) {
  write_text_file(csv_path, trajectory_csv(rec));
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  write_json_file(sidecar, trajectory_sidecar(rec));
}

inline json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json summary_to_json(const Summary& s) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"mean", num(s.mean)}, {"median", num(s.median)}, {"count", s.count}, {"undefined", s.undefined}};
}

inline json report_to_json(const EvalReport& r) {
  json trials = json::array();
  for (const auto& t : r.trials) {
    json row = {{"trial", t.trial}, {"failed", t.failed}};
    if (t.failed) {
      row["error"] = t.error;
    } else {
      row.update({{"L_path_init", t.L_path_init},
                  {"L_path_opt", t.L_path_opt},
                  {"L_diff_init", t.L_diff_init},
                  {"L_diff_opt", t.L_diff_opt},
                  {"delta_path", optional_number(t.delta_path)},
                  {"delta_diff", optional_number(t.delta_diff)},
                  {"scale_init_final", t.scale_init_final},
                  {"scale_opt_final", t.scale_opt_final},
                  {"events_init", t.events_init},
                  {"events_opt", t.events_opt},
                  {"converged_init", t.converged_init},
                  {"converged_opt", t.converged_opt}});
    }
    trials.push_back(row);
  }
  return {{"label", r.label},
          {"delta_path", summary_to_json(r.delta_path)},
          {"delta_diff", summary_to_json(r.delta_diff)},
          {"improvement_fraction", r.improvement_fraction},
          {"mean_L_path_init", r.mean_L_path_init},
          {"mean_L_path_opt", r.mean_L_path_opt},
          {"mean_scale_init_final", r.mean_scale_init_final},
          {"mean_scale_opt_final", r.mean_scale_opt_final},
          {"converged_init", r.converged_init},
          {"converged_opt", r.converged_opt},
          {"failed", r.failed},
          {"trials", trials}};
}

inline std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "trial,L_path_init,L_path_opt,L_diff_init,L_diff_opt,delta_path,delta_diff,scale_init_final,scale_opt_final,"
         "events_init,events_opt,converged_init,converged_opt,failed\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) out << *v;
  };
  for (const auto& t : r.trials) {
    out << t.trial << ',' << t.L_path_init << ',' << t.L_path_opt << ',' << t.L_diff_init << ',' << t.L_diff_opt << ',';
    opt(t.delta_path);
    out << ',';
    opt(t.delta_diff);
    out << ',' << t.scale_init_final << ',' << t.scale_opt_final << ',' << t.events_init << ',' << t.events_opt << ','
        << (t.converged_init ? 1 : 0) << ',' << (t.converged_opt ? 1 : 0) << ',' << (t.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

inline json solver_options_to_json(const SolverOptions& o) {
  return {{"method", o.method == SolverMethod::kSqp ? "sqp" : "projected_gradient"},
          {"max_iterations", o.max_iterations},
          {"gradient_tol", o.gradient_tol},
          {"function_tol", o.function_tol},
          {"stall_iterations", o.stall_iterations},
          {"armijo", o.armijo},
          {"max_backtracks", o.max_backtracks},
          {"probe_steps", o.probe_steps},
          {"initial_step_fraction", o.initial_step_fraction},
          {"restart_step_fractions", o.restart_step_fractions},
          {"relaxed", o.relaxed}};
}

inline json optimization_to_json(const OptimizationResult& r) {
  json per_ic = json::array();
  for (const auto& b : r.per_ic)
    per_ic.push_back({{"path", b.path}, {"terminal", b.terminal}, {"guard_events", b.guard_events}, {"failed", b.failed}});
  return {{"alpha_opt", vec_to_json(r.alpha_opt)},
          {"objective_history", r.objective_history},
          {"feasibility_residuals", r.feasibility_residuals},
          {"status", to_string(r.status)},
          {"iterations", r.iterations},
          {"evaluations", r.evaluations},
          {"projected_gradient_norm", r.projected_gradient_norm},
          {"step_fraction", r.step_fraction},
          {"per_ic", per_ic}};
}

inline std::string history_csv(const OptimizationResult& r) {
  std::ostringstream out;
  out << std::setprecision(17) << "iteration,objective,feasibility_residual\n";
  for (std::size_t k = 0; k < r.objective_history.size(); ++k)
    out << k << ',' << r.objective_history[k] << ',' << r.feasibility_residuals[k] << '\n';
  return out.str();
}

inline json error_to_json(const Error& e) { return {{"error", to_string(e.code())}, {"message", e.what()}}; }

}  // namespace bearshape::io
