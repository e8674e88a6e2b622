#pragma once

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bearshape/controller.hpp"
#include "bearshape/error.hpp"
#include "bearshape/formation.hpp"

namespace bearshape {

enum class Integrator { kAdaptiveRK45, kFixedRK4 };

struct BumpConfig {
  double epsilon = 1e-3;
  int power = 2;
};

struct SimConfig {
  double horizon = 20.0;
  Integrator integrator = Integrator::kAdaptiveRK45;
  double step = 0.005;  // fixed-step size
  double abs_tol = 1e-9;
  double rel_tol = 1e-7;
  double max_step = 0.0;  // adaptive cap; <= 0 means horizon / 50
  /// Absolute guard band; <= 0 means guard_relative * desired diameter.
  double min_separation = 0.0;
  double guard_relative = 1e-4;
  /// Close enough to the band that the Euler escape is used instead of shrinking the step.
  double guard_escape_factor = 4.0;
  /// Pairs closer than this multiple of the guard band drop their (near-singular) state Jacobian from
  /// the sensitivity equation; repeated escapes in a sliding contact would otherwise blow S up.
  double sensitivity_cutoff_factor = 4.0;
  std::optional<BumpConfig> bump;
  /// Stop integrating once ||u|| drops below this and hold the state to the horizon. <= 0 disables.
  double early_exit_speed = 1e-8;
  bool record_sensitivity_history = false;
  /// Accepted plus rejected steps before the run is abandoned as a guard failure.
  int max_steps = 200000;

  void validate() const {
    if (!(horizon > 0.0)) throw Error(ErrorCode::kInvalidArgument, "horizon must be positive");
    if (!(step > 0.0)) throw Error(ErrorCode::kInvalidArgument, "step must be positive");
    if (max_steps < 1) throw Error(ErrorCode::kInvalidArgument, "step budget must be positive");
    if (!(guard_relative > 0.0) && !(min_separation > 0.0))
      throw Error(ErrorCode::kInvalidArgument, "guard threshold must be positive");
    if (bump && (bump->power < 1 || !(bump->epsilon > 0.0)))
      throw Error(ErrorCode::kInvalidArgument, "bump needs epsilon > 0 and power >= 1");
  }
  double guard_threshold(const FormationSpec& spec) const {
    return min_separation > 0.0 ? min_separation : guard_relative * spec.desired().diameter();
  }
};

struct GuardEvent {
  double time = 0.0;
  int agent_i = 0;
  int agent_j = 0;
  double distance_before = 0.0;
  double distance_after = 0.0;
  double euler_step = 0.0;
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Mat> states;             // dim x N per time
  std::vector<Vec> path_lengths;       // per-agent accumulated length per time
  std::vector<Mat> sensitivities;      // (N dim) x P per time, when recorded
  Mat terminal_sensitivity;            // S(T), empty without sensitivity
  Vec path_length_gradient;            // d/dalpha of sum_i path_i(T), empty without sensitivity
  std::vector<GuardEvent> events;
  bool exited_early = false;
  double exit_time = 0.0;
  double terminal_cost = 0.0;
  int steps = 0;

  Configuration terminal_state() const { return Configuration(states.back()); }
  Configuration initial_state() const { return Configuration(states.front()); }
  double total_path_length() const { return path_lengths.back().sum(); }
};

/// phi_e(d) = 1 - exp(1 + 1 / ((d/eps)^(2p) - 1)) for d < eps, else 1.
inline double bump_edge(double d, double epsilon, int power) {
  if (d >= epsilon) return 1.0;
  const double r = std::pow(d / epsilon, 2 * power);
  return 1.0 - std::exp(1.0 + 1.0 / (r - 1.0));
}

inline double bump_edge_derivative(double d, double epsilon, int power) {
  if (d >= epsilon || d <= 0.0) return 0.0;
  const double r = std::pow(d / epsilon, 2 * power);
  const double w = 1.0 + 1.0 / (r - 1.0);
  return std::exp(w) / ((r - 1.0) * (r - 1.0)) * (2.0 * power * r / d);
}

/// Product of phi_e over the ranges to an agent's neighbours.
inline double bump_weight(const std::vector<double>& ranges, double epsilon, int power) {
  double w = 1.0;
  for (double d : ranges) w *= bump_edge(d, epsilon, power);
  return w;
}

/// Per-agent path-length integrand: ||u_i||, optionally weighted by the bump product.
inline Vec path_length_integrand(const Configuration& x, const ControllerConfig& ctrl,
                                 const std::optional<BumpConfig>& bump) {
  const Vec u = control(x, ctrl);
  const int n = x.dim();
  Vec out(x.num_agents());
  for (int i = 0; i < x.num_agents(); ++i) {
    out[i] = u.segment(n * i, n).norm();
    if (bump) {
      std::vector<double> ranges;
      for (int j : ctrl.spec.graph().neighbours(i)) ranges.push_back((x.agent(j) - x.agent(i)).norm());
      out[i] *= bump_weight(ranges, bump->epsilon, bump->power);
    }
  }
  return out;
}

namespace detail {

/// Closed-loop right-hand side over the packed state
///   [ x (N n) | path (N) | S (N n x P, column-major) | dpath/dalpha (P) ].
class ClosedLoop {
 public:
  using State = std::vector<double>;

  ClosedLoop(const ControllerConfig& ctrl, bool with_sensitivity, std::optional<BumpConfig> bump,
             double jacobian_cutoff = 0.0)
      : ctrl_(ctrl),
        edges_(ctrl.spec.graph().undirected_bearing_edges()),
        n_(ctrl.spec.dim()),
        agents_(ctrl.spec.num_agents()),
        params_(with_sensitivity ? ctrl.params.num_params() : 0),
        sens_(with_sensitivity),
        bump_(bump),
        cutoff_(jacobian_cutoff) {
    leader_.assign(agents_, false);
    for (int l : ctrl.leaders) leader_[l] = true;
  }

  std::size_t size() const {
    const std::size_t nx = static_cast<std::size_t>(n_) * agents_;
    return nx + agents_ + (sens_ ? nx * params_ + params_ : 0);
  }
  int num_params() const { return params_; }
  int dim() const { return n_; }
  int agents() const { return agents_; }
  const std::vector<Edge>& edges() const { return edges_; }

  Eigen::Map<const Mat> positions(const State& y) const { return {y.data(), n_, agents_}; }
  Eigen::Map<const Vec> path(const State& y) const { return {y.data() + n_ * agents_, agents_}; }
  Eigen::Map<const Mat> sensitivity(const State& y) const {
    return {y.data() + n_ * agents_ + agents_, n_ * agents_, params_};
  }
  Eigen::Map<const Vec> path_gradient(const State& y) const {
    return {y.data() + n_ * agents_ + agents_ + n_ * agents_ * params_, params_};
  }

  void operator()(const State& y, State& dy, double /*t*/) const { eval(y, dy, nullptr); }

  /// `speed`, when given, receives ||u||.
  void eval(const State& y, State& dy, double* speed) const {
    dy.assign(y.size(), 0.0);
    const Configuration x(positions(y));
    Eigen::Map<Mat> dx(dy.data(), n_, agents_);
    Eigen::Map<Vec> dpath(dy.data() + n_ * agents_, agents_);
    Mat s_dot;
    if (sens_) s_dot = Mat::Zero(n_ * agents_, params_);
    Eigen::Map<const Mat> s(y.data() + n_ * agents_ + agents_, sens_ ? n_ * agents_ : 0, params_);
    for (const auto& e : edges_) {
      const PairTerms t = pair_terms(x, e, ctrl_, sens_);
      dx.col(e.i) -= t.g;
      dx.col(e.j) += t.g;
      if (sens_) {
        Mat m = t.jac_alpha;
        if (cutoff_ <= 0.0 || (x.agent(e.j) - x.agent(e.i)).norm() >= cutoff_)
          m.noalias() += t.jac_x * (s.middleRows(n_ * e.i, n_) - s.middleRows(n_ * e.j, n_));
        s_dot.middleRows(n_ * e.i, n_) -= m;
        s_dot.middleRows(n_ * e.j, n_) += m;
      }
    }
    for (int i = 0; i < agents_; ++i) {
      if (leader_[i]) {
        dx.col(i).setZero();
        if (sens_) s_dot.middleRows(n_ * i, n_).setZero();
      }
    }
    if (speed) *speed = dx.norm();

    Eigen::Map<Vec> dgrad(dy.data() + n_ * agents_ + agents_ + n_ * agents_ * params_, params_);
    for (int i = 0; i < agents_; ++i) {
      const double ui = dx.col(i).norm();
      double w = 1.0;
      Eigen::RowVectorXd dw;  // d(weight)/dalpha
      if (bump_) {
        const auto& nb = ctrl_.spec.graph().neighbours(i);
        std::vector<double> fac(nb.size()), dfac(nb.size());
        std::vector<Vec> beta(nb.size());
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const Vec r = x.agent(nb[k]) - x.agent(i);
          const double d = r.norm();
          fac[k] = bump_edge(d, bump_->epsilon, bump_->power);
          dfac[k] = bump_edge_derivative(d, bump_->epsilon, bump_->power);
          beta[k] = d > 0.0 ? Vec(r / d) : Vec::Zero(n_);
          w *= fac[k];
        }
        if (sens_) {
          dw = Eigen::RowVectorXd::Zero(params_);
          for (std::size_t k = 0; k < nb.size(); ++k) {
            if (dfac[k] == 0.0) continue;
            double others = 1.0;
            for (std::size_t m = 0; m < nb.size(); ++m)
              if (m != k) others *= fac[m];
            dw += others * dfac[k] * beta[k].transpose() *
                  (s.middleRows(n_ * nb[k], n_) - s.middleRows(n_ * i, n_));
          }
        }
      }
      dpath[i] = w * ui;
      if (sens_) {
        if (ui >= kDirectionFloor) dgrad += (w / ui) * (dx.col(i).transpose() * s_dot.middleRows(n_ * i, n_)).transpose();
        if (bump_) dgrad += ui * dw.transpose();
      }
    }
    if (sens_) Eigen::Map<Mat>(dy.data() + n_ * agents_ + agents_, n_ * agents_, params_) = s_dot;
  }

  /// Below this speed the direction u_i/||u_i|| is undefined and the path-gradient integrand is 0.
  static constexpr double kDirectionFloor = 1e-10;

 private:
  const ControllerConfig& ctrl_;
  std::vector<Edge> edges_;
  int n_;
  int agents_;
  int params_;
  bool sens_;
  std::optional<BumpConfig> bump_;
  double cutoff_;
  std::vector<bool> leader_;
};

struct Approach {
  double distance = std::numeric_limits<double>::infinity();
  int i = -1;
  int j = -1;
};

/// Closest approach of connected pairs when positions move linearly from a to b.
inline Approach closest_approach(const Eigen::Ref<const Mat>& a, const Eigen::Ref<const Mat>& b,
                                 const std::vector<Edge>& edges) {
  Approach best;
  for (const auto& e : edges) {
    const Vec r0 = a.col(e.j) - a.col(e.i);
    const Vec dr = (b.col(e.j) - b.col(e.i)) - r0;
    const double dd = dr.squaredNorm();
    double s = dd > 0.0 ? std::clamp(-r0.dot(dr) / dd, 0.0, 1.0) : 0.0;
    const double dist = (r0 + s * dr).norm();
    if (dist < best.distance) best = {dist, e.i, e.j};
  }
  return best;
}

inline Approach min_separation(const Eigen::Ref<const Mat>& a, const std::vector<Edge>& edges) {
  return closest_approach(a, a, edges);
}

}  // namespace detail

/// Integrates x' = u jointly with the path-length quadrature and, optionally, the
/// sensitivity S = dx/dalpha and the path-length gradient quadrature.
inline TrajectoryRecord simulate(const ControllerConfig& ctrl, const Configuration& x0, const SimConfig& sim,
                                 bool with_sensitivity) {
  namespace odeint = boost::numeric::odeint;
  using State = detail::ClosedLoop::State;
  ctrl.validate();
  sim.validate();
  if (x0.num_agents() != ctrl.spec.num_agents() || x0.dim() != ctrl.spec.dim())
    throw Error(ErrorCode::kInvalidArgument, "initial configuration does not match formation");

  const double guard = sim.guard_threshold(ctrl.spec);
  const detail::ClosedLoop system(ctrl, with_sensitivity, sim.bump, sim.sensitivity_cutoff_factor * guard);
  const auto& edges = system.edges();
  const int n = system.dim();
  const int agents = system.agents();

  {
    const auto sep = detail::min_separation(x0.positions(), edges);
    if (sep.distance < guard)
      throw Error(ErrorCode::kGuardFailure, "connected agents start closer than the guard threshold");
  }

  State y(system.size(), 0.0);
  std::copy(x0.positions().data(), x0.positions().data() + n * agents, y.begin());

  TrajectoryRecord rec;
  auto record = [&](double t, const State& state) {
    rec.times.push_back(t);
    rec.states.emplace_back(system.positions(state));
    rec.path_lengths.emplace_back(system.path(state));
    if (with_sensitivity && sim.record_sensitivity_history) rec.sensitivities.emplace_back(system.sensitivity(state));
  };
  record(0.0, y);

  const double horizon = sim.horizon;
  const double max_dt = sim.max_step > 0.0 ? sim.max_step : horizon / 50.0;
  auto controlled = odeint::make_controlled(sim.abs_tol, sim.rel_tol, odeint::runge_kutta_cash_karp54<State>());
  odeint::runge_kutta4<State> rk4;

  double t = 0.0;
  double dt = sim.integrator == Integrator::kFixedRK4 ? sim.step : std::min(1e-3, max_dt);
  State y_new(y.size()), dy(y.size());
  double speed = 0.0;

  while (t < horizon) {
    system.eval(y, dy, &speed);
    if (sim.early_exit_speed > 0.0 && speed < sim.early_exit_speed) {
      rec.exited_early = true;
      rec.exit_time = t;
      break;
    }
    if (++rec.steps > sim.max_steps) throw Error(ErrorCode::kGuardFailure, "step budget exhausted");

    double h = std::min(dt, horizon - t);
    if (sim.integrator == Integrator::kFixedRK4) h = std::min(h, sim.step);
    else h = std::min(h, max_dt);
    // Snap tiny remainders to the horizon.
    if (horizon - (t + h) < 1e-12 * horizon) h = horizon - t;

    double t_new = t;
    if (sim.integrator == Integrator::kAdaptiveRK45) {
      double h_try = h;
      t_new = t;
      if (controlled.try_step(std::cref(system), y, dy, t_new, y_new, h_try) == odeint::fail) {
        dt = h_try;
        continue;
      }
      dt = h_try;  // suggested next step
    } else {
      rk4.do_step(std::cref(system), y, dy, t, y_new, h);
      t_new = t + h;
    }

    const auto pass = detail::closest_approach(system.positions(y), system.positions(y_new), edges);
    if (pass.distance < guard) {
      const auto now = detail::min_separation(system.positions(y), edges);
      const bool close = now.distance <= sim.guard_escape_factor * guard || h < 1e-12 * horizon;
      if (!close) {
        dt = 0.5 * h;
        continue;
      }
      // Euler escape: a linear step across the closest point of approach of the offending pair,
      // lengthened if it would leave another approaching pair inside the band.
      const auto pos = system.positions(y);
      const Eigen::Map<const Mat> vel(dy.data(), n, agents);
      auto crossing_time = [&](int i, int j) {
        const Vec r = pos.col(j) - pos.col(i);
        const Vec w = vel.col(j) - vel.col(i);
        const double ww = w.squaredNorm();
        return ww > 0.0 ? -r.dot(w) / ww : 0.0;
      };
      const double t_star = crossing_time(pass.i, pass.j);
      if (!(t_star > 0.0)) throw Error(ErrorCode::kGuardFailure, "connected agents inside guard band and not separating");
      double h_euler = 2.0 * t_star;
      detail::Approach after;
      for (int attempt = 0; attempt < 4; ++attempt) {
        h_euler = std::min(h_euler, horizon - t);
        for (std::size_t k = 0; k < y.size(); ++k) y_new[k] = y[k] + h_euler * dy[k];
        after = detail::min_separation(system.positions(y_new), edges);
        if (after.distance >= guard || t + h_euler >= horizon) break;
        const double other = crossing_time(after.i, after.j);
        if (!(2.0 * other > h_euler)) break;
        h_euler = 2.0 * other;
      }
      const bool at_horizon = t + h_euler >= horizon;
      if (after.distance < guard && !at_horizon)
        throw Error(ErrorCode::kGuardFailure, "Euler escape did not leave the guard band");
      rec.events.push_back({t, pass.i, pass.j, now.distance, after.distance, h_euler});
      t_new = at_horizon ? horizon : t + h_euler;
      if (sim.integrator == Integrator::kFixedRK4) dt = sim.step;
    } else if (sim.integrator == Integrator::kFixedRK4) {
      dt = sim.step;
    }

    y.swap(y_new);
    t = t_new;
    record(t, y);
  }

  if (rec.times.back() < horizon) {
    // Frozen dynamics after early exit: hold the state (and S) to the horizon.
    record(horizon, y);
  }
  if (!rec.exited_early) rec.exit_time = horizon;

  const Configuration xt(system.positions(y));
  rec.terminal_cost = total_cost(xt, ctrl);
  if (with_sensitivity) {
    rec.terminal_sensitivity = system.sensitivity(y);
    rec.path_length_gradient = system.path_gradient(y);
  }
  return rec;
}

}  // namespace bearshape
