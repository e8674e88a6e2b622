#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bearshape/formation.hpp"
#include "bearshape/simulator.hpp"

namespace bearshape {

inline double metric_L_path(const TrajectoryRecord& rec) { return rec.total_path_length(); }

/// Path length minus the straight-line displacement of every agent.
inline double metric_L_diff(const TrajectoryRecord& rec) {
  const Mat& a = rec.states.front();
  const Mat& b = rec.states.back();
  return metric_L_path(rec) - (b - a).colwise().norm().sum();
}

/// 100 (init - opt) / init, undefined when init is zero.
inline std::optional<double> metric_delta(double init, double opt) {
  if (!(std::abs(init) > 0.0)) return std::nullopt;
  return 100.0 * (init - opt) / init;
}

struct Deltas {
  std::optional<double> path;
  std::optional<double> diff;
};

inline Deltas metric_deltas(double path_init, double path_opt, double diff_init, double diff_opt) {
  return {metric_delta(path_init, path_opt), metric_delta(diff_init, diff_opt)};
}

/// RMS distance of the agents from their centroid.
inline double metric_scale(const Configuration& x) {
  const Mat centred = x.positions().colwise() - x.centroid();
  return std::sqrt(centred.squaredNorm() / x.num_agents());
}

struct TrialMetrics {
  int trial = 0;
  double L_path_init = 0.0;
  double L_path_opt = 0.0;
  double L_diff_init = 0.0;
  double L_diff_opt = 0.0;
  std::optional<double> delta_path;
  std::optional<double> delta_diff;
  double scale_init_final = 0.0;
  double scale_opt_final = 0.0;
  int events_init = 0;
  int events_opt = 0;
  bool converged_init = false;
  bool converged_opt = false;
  bool failed = false;
  std::string error;
};

inline TrialMetrics trial_metrics(int trial, const TrajectoryRecord& init, const TrajectoryRecord& opt) {
  TrialMetrics m;
  m.trial = trial;
  m.L_path_init = metric_L_path(init);
  m.L_path_opt = metric_L_path(opt);
  m.L_diff_init = metric_L_diff(init);
  m.L_diff_opt = metric_L_diff(opt);
  const auto d = metric_deltas(m.L_path_init, m.L_path_opt, m.L_diff_init, m.L_diff_opt);
  m.delta_path = d.path;
  m.delta_diff = d.diff;
  m.scale_init_final = metric_scale(init.terminal_state());
  m.scale_opt_final = metric_scale(opt.terminal_state());
  m.events_init = static_cast<int>(init.events.size());
  m.events_opt = static_cast<int>(opt.events.size());
  return m;
}

struct Summary {
  double mean = std::nan("");
  double median = std::nan("");
  int count = 0;
  int undefined = 0;
};

inline Summary summarize(const std::vector<std::optional<double>>& values) {
  Summary s;
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
    else ++s.undefined;
  }
  s.count = static_cast<int>(v.size());
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

struct EvalReport {
  std::string label;
  std::vector<TrialMetrics> trials;
  Summary delta_path;
  Summary delta_diff;
  double improvement_fraction = 0.0;
  double mean_L_path_init = 0.0;
  double mean_L_path_opt = 0.0;
  double mean_scale_init_final = 0.0;
  double mean_scale_opt_final = 0.0;
  int converged_init = 0;
  int converged_opt = 0;
  int failed = 0;
};

/// Aggregates over the trials that completed; failed trials are only counted.
inline EvalReport aggregate(std::string label, std::vector<TrialMetrics> trials) {
  EvalReport r;
  r.label = std::move(label);
  r.trials = std::move(trials);
  std::vector<std::optional<double>> dp, dd;
  int ok = 0, improved = 0;
  for (const auto& t : r.trials) {
    if (t.failed) {
      ++r.failed;
      continue;
    }
    ++ok;
    dp.push_back(t.delta_path);
    dd.push_back(t.delta_diff);
    if (t.L_path_opt < t.L_path_init) ++improved;
    r.converged_init += t.converged_init ? 1 : 0;
    r.converged_opt += t.converged_opt ? 1 : 0;
    r.mean_L_path_init += t.L_path_init;
    r.mean_L_path_opt += t.L_path_opt;
    r.mean_scale_init_final += t.scale_init_final;
    r.mean_scale_opt_final += t.scale_opt_final;
  }
  r.delta_path = summarize(dp);
  r.delta_diff = summarize(dd);
  if (ok > 0) {
    r.improvement_fraction = static_cast<double>(improved) / ok;
    r.mean_L_path_init /= ok;
    r.mean_L_path_opt /= ok;
    r.mean_scale_init_final /= ok;
    r.mean_scale_opt_final /= ok;
  }
  return r;
}

}  // namespace bearshape
