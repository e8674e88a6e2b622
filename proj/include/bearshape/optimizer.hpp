#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <thread>
#include <vector>

#include "bearshape/controller.hpp"
#include "bearshape/error.hpp"
#include "bearshape/qp.hpp"
#include "bearshape/reshaping.hpp"
#include "bearshape/simulator.hpp"

namespace bearshape {

struct TrainingProblem {
  ControllerConfig ctrl;  // template; its params fix the grids
  std::vector<Configuration> initial_conditions;
  double omega = 1000.0;
  SimConfig sim;
  ShapeConstraints constraints;

  TrainingProblem() = default;
  TrainingProblem(ControllerConfig c, std::vector<Configuration> ics, SimConfig s, double w = 1000.0)
      : ctrl(std::move(c)), initial_conditions(std::move(ics)), omega(w), sim(s), constraints(build_constraints(ctrl.params)) {
    validate();
  }

  void validate() const {
    if (initial_conditions.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
    if (!(omega > 0.0)) throw Error(ErrorCode::kInvalidArgument, "terminal weight must be positive");
    if (constraints.num_params() != ctrl.params.num_params())
      throw Error(ErrorCode::kInvalidArgument, "constraint width does not match parameter count");
  }
  int num_params() const { return ctrl.params.num_params(); }
};

struct IcBreakdown {
  double path = 0.0;
  double terminal = 0.0;  // omega * phi(x(T))
  int guard_events = 0;
  bool failed = false;
};

struct Evaluation {
  double value = 0.0;
  Vec gradient;  // empty unless requested
  std::vector<IcBreakdown> per_ic;
  bool finite() const { return std::isfinite(value); }
};

namespace detail {

/// Runs fn(0..n-1) on up to `threads` workers (0 = hardware concurrency); callers write to
/// pre-sized slots so results and reductions keep a fixed order.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::future<void>> jobs;
  for (int w = 0; w < threads; ++w)
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (int k = w; k < n; k += threads) fn(k);
    }));
  for (auto& j : jobs) j.get();
}

struct IcResult {
  IcBreakdown terms;
  Vec gradient;
};

inline IcResult evaluate_ic(const ControllerConfig& ctrl, const Configuration& x0, const TrainingProblem& problem,
                            bool with_gradient) {
  IcResult out;
  try {
    const auto rec = simulate(ctrl, x0, problem.sim, with_gradient);
    out.terms.path = rec.total_path_length();
    out.terms.terminal = problem.omega * rec.terminal_cost;
    out.terms.guard_events = static_cast<int>(rec.events.size());
    if (with_gradient) {
      const auto xt = rec.terminal_state();
      out.gradient = rec.path_length_gradient +
                     problem.omega * (cost_param_gradient(xt, ctrl) +
                                      rec.terminal_sensitivity.transpose() * cost_gradient(xt, ctrl));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kGuardFailure && e.code() != ErrorCode::kDomain) throw;
    out.terms.failed = true;
  }
  return out;
}

}  // namespace detail

/// Objective (and optionally its gradient) summed over the training set in fixed order.
/// Guard failures make the value +inf so a line search backs off.
inline Evaluation evaluate(const Vec& alpha, const TrainingProblem& problem, bool with_gradient, int threads = 0) {
  const ControllerConfig ctrl = problem.ctrl.with_alpha(alpha);
  const auto& ics = problem.initial_conditions;
  const int n = static_cast<int>(ics.size());
  std::vector<detail::IcResult> results(n);
  detail::parallel_for(n, threads, [&](int k) { results[k] = detail::evaluate_ic(ctrl, ics[k], problem, with_gradient); });
  Evaluation ev;
  if (with_gradient) ev.gradient = Vec::Zero(alpha.size());
  for (const auto& r : results) {
    ev.per_ic.push_back(r.terms);
    if (r.terms.failed) {
      ev.value = std::numeric_limits<double>::infinity();
      continue;
    }
    ev.value += r.terms.path + r.terms.terminal;
    if (with_gradient) ev.gradient += r.gradient;
  }
  return ev;
}

inline double objective(const Vec& alpha, const TrainingProblem& problem) {
  return evaluate(alpha, problem, false).value;
}

inline Vec objective_gradient(const Vec& alpha, const TrainingProblem& problem) {
  return evaluate(alpha, problem, true).gradient;
}

enum class SolverMethod { kSqp, kProjectedGradient };
enum class SolverStatus { kConverged, kMaxIterations, kLineSearchFailed };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::kConverged: return "converged";
    case SolverStatus::kMaxIterations: return "max_iterations";
    case SolverStatus::kLineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

struct SolverOptions {
  SolverMethod method = SolverMethod::kSqp;
  int max_iterations = 40;
  /// Stop when the projected gradient norm falls below this.
  double gradient_tol = 1e-6;
  /// Stop after `stall_iterations` consecutive accepted steps with relative decrease below this.
  double function_tol = 1e-5;
  int stall_iterations = 2;
  double armijo = 1e-4;
  int max_backtracks = 10;
  /// Steepest-descent probes tried after the model step fails.
  int probe_steps = 8;
  /// First quasi-Newton step is about this fraction of ||alpha||.
  double initial_step_fraction = 0.1;
  /// Further runs from the same start with these first-step fractions; the lowest final objective wins.
  std::vector<double> restart_step_fractions = {0.05, 0.02};
  /// Drop all shape constraints (diagnostic only).
  bool relaxed = false;
  int threads = 0;
  /// Called after every accepted step with (iteration, objective).
  std::function<void(int, double)> on_iteration;
};

struct OptimizationResult {
  Vec alpha_opt;
  std::vector<double> objective_history;
  std::vector<double> feasibility_residuals;
  std::vector<IcBreakdown> per_ic;
  SolverStatus status = SolverStatus::kMaxIterations;
  int iterations = 0;
  int evaluations = 0;
  double projected_gradient_norm = 0.0;
  /// First-step fraction of the returned run.
  double step_fraction = 0.0;
};

namespace detail {

/// Solves the step QP in the shifted variable p = alpha_new - alpha.
inline Vec constrained_step(const Mat& b, const Vec& g, const ShapeConstraints& c, const Vec& alpha) {
  const Vec rhs_eq = c.b_eq - c.a_eq * alpha;
  Vec rhs_in = c.b_in - c.a_in * alpha;
  // Rounding can leave an active row a hair outside; p = 0 must be a valid start.
  rhs_in = rhs_in.cwiseMax(0.0);
  Vec p0 = Vec::Zero(alpha.size());
  if (rhs_eq.size() > 0 && rhs_eq.cwiseAbs().maxCoeff() > 0.0)
    p0 = c.a_eq.completeOrthogonalDecomposition().solve(rhs_eq);
  if (rhs_in.size() > 0 && (c.a_in * p0 - rhs_in).maxCoeff() > 1e-8) p0.setZero();
  return solve_qp(b, g, c.a_eq, rhs_eq, c.a_in, rhs_in, p0).x;
}

}  // namespace detail

/// Norm of the step that projects -g onto the feasible directions at alpha.
inline double projected_gradient_norm(const Vec& g, const ShapeConstraints& c, const Vec& alpha) {
  return detail::constrained_step(Mat::Identity(g.size(), g.size()), g, c, alpha).norm();
}

namespace detail {

inline OptimizationResult optimize_run(const TrainingProblem& problem, const SolverOptions& opts,
                                       const std::optional<Vec>& start) {
  problem.validate();
  const int np = problem.num_params();
  const ShapeConstraints constraints = opts.relaxed ? ShapeConstraints(np) : problem.constraints;
  Vec alpha = start ? *start : problem.ctrl.params.alpha();
  if (!constraints.feasible(alpha, 1e-8))
    throw Error(ErrorCode::kInfeasibleStart, "starting parameters violate the shape constraints");

  OptimizationResult res;
  res.step_fraction = opts.initial_step_fraction;
  Evaluation cur = evaluate(alpha, problem, true, opts.threads);
  ++res.evaluations;
  if (!cur.finite()) throw Error(ErrorCode::kGuardFailure, "objective is not finite at the starting parameters");
  res.objective_history.push_back(cur.value);
  res.feasibility_residuals.push_back(constraints.violation(alpha));

  // Scaled so the first step has length initial_step_fraction * ||alpha||; gradient components
  // along constrained directions (f(1) for instance) must not set the scale.
  auto scaled_identity = [&](const Vec& g) {
    const double len = opts.initial_step_fraction * std::max(alpha.norm(), 1.0);
    return Mat(Mat::Identity(np, np) * std::max(projected_gradient_norm(g, constraints, alpha) / len, 1e-12));
  };
  Mat b = scaled_identity(cur.gradient);
  int stalled = 0;
  res.status = SolverStatus::kMaxIterations;

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    res.projected_gradient_norm = projected_gradient_norm(cur.gradient, constraints, alpha);
    if (res.projected_gradient_norm <= opts.gradient_tol) {
      res.status = SolverStatus::kConverged;
      break;
    }
    const Mat model = opts.method == SolverMethod::kSqp ? b : scaled_identity(cur.gradient);
    Vec p = detail::constrained_step(model, cur.gradient, constraints, alpha);
    double slope = cur.gradient.dot(p);
    if (!(slope < 0.0)) {
      b = scaled_identity(cur.gradient);
      p = detail::constrained_step(b, cur.gradient, constraints, alpha);
      slope = cur.gradient.dot(p);
    }
    if (!(slope < 0.0)) {
      res.status = SolverStatus::kConverged;
      break;
    }

    bool accepted = false;
    double t = 1.0;
    Evaluation trial;
    Vec alpha_new;
    for (int k = 0; k <= opts.max_backtracks; ++k, t *= 0.5) {
      alpha_new = alpha + t * p;
      trial = evaluate(alpha_new, problem, true, opts.threads);
      ++res.evaluations;
      if (trial.finite() && trial.value <= cur.value + opts.armijo * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (opts.method == SolverMethod::kSqp && b != scaled_identity(cur.gradient)) {
        // Fall back to a fresh model once before giving up.
        b = scaled_identity(cur.gradient);
        continue;
      }
      // Near agent crossings the objective has kinks the gradient does not see: probe the projected
      // steepest-descent direction and take any strict decrease.
      Vec d = detail::constrained_step(Mat::Identity(np, np), cur.gradient, constraints, alpha);
      const double len = opts.initial_step_fraction * std::max(alpha.norm(), 1.0);
      if (d.norm() > len) d *= len / d.norm();
      t = 1.0;
      for (int k = 0; k < opts.probe_steps && d.norm() > 0.0; ++k, t *= 0.5) {
        alpha_new = alpha + t * d;
        trial = evaluate(alpha_new, problem, true, opts.threads);
        ++res.evaluations;
        if (trial.finite() && trial.value < cur.value) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        res.status = SolverStatus::kLineSearchFailed;
        break;
      }
    }

    // Damped BFGS keeps the model positive definite.
    const Vec s = alpha_new - alpha;
    const Vec y = trial.gradient - cur.gradient;
    const Vec bs = b * s;
    const double sbs = s.dot(bs);
    const double sy = s.dot(y);
    if (sbs > 0.0) {
      const double theta = sy >= 0.2 * sbs ? 1.0 : 0.8 * sbs / (sbs - sy);
      const Vec r = theta * y + (1.0 - theta) * bs;
      const double sr = s.dot(r);
      if (sr > 0.0) b += r * r.transpose() / sr - bs * bs.transpose() / sbs;
    }

    const double drop = (cur.value - trial.value) / std::max(std::abs(cur.value), 1e-12);
    alpha = alpha_new;
    cur = std::move(trial);
    res.objective_history.push_back(cur.value);
    res.feasibility_residuals.push_back(constraints.violation(alpha));
    if (opts.on_iteration) opts.on_iteration(res.iterations, cur.value);
    stalled = drop < opts.function_tol ? stalled + 1 : 0;
    if (stalled >= opts.stall_iterations) {
      res.status = SolverStatus::kConverged;
      ++res.iterations;
      break;
    }
  }
  res.alpha_opt = alpha;
  res.per_ic = cur.per_ic;
  res.projected_gradient_norm = projected_gradient_norm(cur.gradient, constraints, alpha);
  return res;
}

}  // namespace detail

/// Linearly constrained minimisation from a feasible start. Every accepted iterate is feasible.
/// The objective is nonsmooth and multimodal, so the run is repeated with each restart step fraction
/// and the run with the lowest final objective is returned; `evaluations` counts all runs.
inline OptimizationResult optimize(const TrainingProblem& problem, const SolverOptions& opts = {},
                                   std::optional<Vec> start = std::nullopt) {
  OptimizationResult best = detail::optimize_run(problem, opts, start);
  for (double f : opts.restart_step_fractions) {
    SolverOptions o = opts;
    o.initial_step_fraction = f;
    OptimizationResult r = detail::optimize_run(problem, o, start);
    if (r.objective_history.back() < best.objective_history.back()) {
      r.evaluations += best.evaluations;
      best = std::move(r);
    } else {
      best.evaluations += r.evaluations;
    }
  }
  return best;
}

struct EdgeSelection {
  std::vector<Edge> edges;
  double score = 0.0;
};

/// Scores every `size`-subset of the bearing edges used as range edges; ascending score.
inline std::vector<EdgeSelection> rank_range_edge_selections(
    const FormationSpec& base, int size, const std::function<double(const FormationSpec&)>& score) {
  const auto all = base.graph().undirected_bearing_edges();
  const int m = static_cast<int>(all.size());
  if (size < 0 || size > m) throw Error(ErrorCode::kInvalidArgument, "selection size out of range");
  std::vector<EdgeSelection> out;
  std::vector<bool> pick(m, false);
  std::fill(pick.begin(), pick.begin() + size, true);
  do {
    EdgeSelection sel;
    for (int k = 0; k < m; ++k)
      if (pick[k]) sel.edges.push_back(all[k]);
    sel.score = score(base.with_range_edges(sel.edges));
    out.push_back(std::move(sel));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  return out;
}

}  // namespace bearshape
