#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <vector>

#include "bearshape/error.hpp"
#include "bearshape/formation.hpp"
#include "bearshape/reshaping.hpp"

namespace bearshape {

struct ControllerConfig {
  FormationSpec spec;
  ReshapingParams params;
  double weight_bearing = 1.0;
  double weight_range = 1.0;
  std::vector<int> leaders;
  /// Below this range the bearing terms use the zero subgradient.
  double coincidence_floor = 1e-9;

  ControllerConfig() = default;
  ControllerConfig(FormationSpec s, ReshapingParams p) : spec(std::move(s)), params(std::move(p)) { validate(); }

  void validate() const {
    if (!(weight_bearing > 0.0)) throw Error(ErrorCode::kInvalidArgument, "bearing weight must be positive");
    if (weight_range < 0.0) throw Error(ErrorCode::kInvalidArgument, "range weight must be non-negative");
    if (!spec.graph().range_edges().empty() && !params.has_range())
      throw Error(ErrorCode::kInvalidArgument, "range edges present but no range reshaping function");
    for (int l : leaders)
      if (l < 0 || l >= spec.num_agents()) throw Error(ErrorCode::kInvalidArgument, "leader index out of range");
  }

  bool uses_range() const { return !spec.graph().range_edges().empty() && weight_range > 0.0; }
  bool is_leader(int i) const { return std::find(leaders.begin(), leaders.end(), i) != leaders.end(); }
  ControllerConfig with_alpha(const Eigen::VectorXd& alpha) const {
    ControllerConfig c = *this;
    c.params = params.with_alpha(alpha);
    return c;
  }
};

/// Gradient of one edge cost with respect to x_i, plus diagnostics.
struct EdgeGradient {
  Vec g_i;
  double c = 1.0;  // bearing similarity
  double d = 0.0;  // range
  double q = 0.0;  // range similarity
  bool coincident = false;
};

namespace detail {
struct EdgeGeometry {
  Vec beta;
  double d = 0.0;
  double c = 1.0;
  bool coincident = false;
};

inline EdgeGeometry edge_geometry(const Configuration& x, Edge e, const Vec& goal, double floor) {
  EdgeGeometry geo;
  Vec r = x.agent(e.j) - x.agent(e.i);
  geo.d = r.norm();
  if (geo.d < floor) {
    geo.coincident = true;
    geo.beta = Vec::Zero(r.size());
    return geo;
  }
  geo.beta = r / geo.d;
  geo.c = bearing_similarity(geo.beta, goal);
  return geo;
}
}  // namespace detail

/// g^b_ij = -f_b(c) beta - f_b'(c) (I - beta beta^T) beta_g. Zero subgradient at coincidence.
inline EdgeGradient edge_gradient_bearing(const Configuration& x, Edge e, const FormationSpec& spec,
                                          const ReshapingParams& params, double floor = 1e-9) {
  const Vec& goal = spec.desired_bearing(e);
  const auto geo = detail::edge_geometry(x, e, goal, floor);
  EdgeGradient out;
  out.d = geo.d;
  out.c = geo.c;
  out.coincident = geo.coincident;
  if (geo.coincident) {
    out.g_i = Vec::Zero(x.dim());
    return out;
  }
  const auto& f = params.bearing();
  const Vec proj_goal = goal - geo.c * geo.beta;
  out.g_i = -f.value(geo.c) * geo.beta - f.derivative(geo.c) * proj_goal;
  return out;
}

/// Range similarity q = d c - d_g = (x_j - x_i)^T beta_g - d_g, so the gradient of f_d(q)
/// with respect to x_i is -f_d'(q) beta_g (well defined even at coincidence).
inline EdgeGradient edge_gradient_range(const Configuration& x, Edge e, const ReshapingParams& params,
                                        const FormationSpec& spec) {
  const Vec& goal = spec.desired_bearing(e);
  const Vec r = x.agent(e.j) - x.agent(e.i);
  EdgeGradient out;
  out.d = r.norm();
  out.c = out.d > 0.0 ? bearing_similarity(r / out.d, goal) : 1.0;
  out.coincident = out.d == 0.0;
  out.q = r.dot(goal) - spec.desired_range(e);
  out.g_i = -params.range().derivative(out.q) * goal;
  return out;
}

/// d g^b_ij / d x_i =
///   -d^{-1} ( f''(c) (c beta - beta_g) beta_g^T + (f'(c) c - f(c)) I ) (I - beta beta^T).
/// Uses the convention of QuadraticSpline::second_derivative at knots; zero at coincidence.
inline Mat grad_g_wrt_state(const Configuration& x, Edge e, const FormationSpec& spec, const ReshapingParams& params,
                            double floor = 1e-9) {
  const Vec& goal = spec.desired_bearing(e);
  const auto geo = detail::edge_geometry(x, e, goal, floor);
  const int n = x.dim();
  if (geo.coincident) return Mat::Zero(n, n);
  const auto& f = params.bearing();
  const double fv = f.value(geo.c), f1 = f.derivative(geo.c), f2 = f.second_derivative(geo.c);
  const Mat proj = Mat::Identity(n, n) - geo.beta * geo.beta.transpose();
  Mat inner = f2 * (geo.c * geo.beta - goal) * goal.transpose();
  inner.diagonal().array() += f1 * geo.c - fv;
  return -(inner * proj) / geo.d;
}

/// d g^b_ij / d alpha_b. Independent of alpha since g is linear in it.
inline Mat grad_g_wrt_params(const Configuration& x, Edge e, const FormationSpec& spec, const ReshapingParams& params,
                             double floor = 1e-9) {
  const Vec& goal = spec.desired_bearing(e);
  const auto geo = detail::edge_geometry(x, e, goal, floor);
  const auto& f = params.bearing();
  if (geo.coincident) return Mat::Zero(x.dim(), f.num_params());
  const Vec proj_goal = goal - geo.c * geo.beta;
  return -geo.beta * f.value_basis(geo.c) - proj_goal * f.derivative_basis(geo.c);
}

/// phi = w_b sum d_ij f_b(c_ij) + w_d sum f_d(q_ij), each undirected edge counted once.
inline double total_cost(const Configuration& x, const ControllerConfig& ctrl) {
  const auto& spec = ctrl.spec;
  double phi = 0.0;
  for (const auto& e : spec.graph().undirected_bearing_edges()) {
    const auto geo = detail::edge_geometry(x, e, spec.desired_bearing(e), ctrl.coincidence_floor);
    if (!geo.coincident) phi += ctrl.weight_bearing * geo.d * ctrl.params.bearing().value(geo.c);
  }
  if (ctrl.uses_range()) {
    for (const auto& e : spec.graph().undirected_range_edges()) {
      const double q = (x.agent(e.j) - x.agent(e.i)).dot(spec.desired_bearing(e)) - spec.desired_range(e);
      phi += ctrl.weight_range * ctrl.params.range().value(q);
    }
  }
  return phi;
}

/// d phi / d alpha at fixed x, over the stacked parameter vector.
inline Vec cost_param_gradient(const Configuration& x, const ControllerConfig& ctrl) {
  const auto& spec = ctrl.spec;
  Vec grad = Vec::Zero(ctrl.params.num_params());
  const int nb = ctrl.params.num_bearing_params();
  for (const auto& e : spec.graph().undirected_bearing_edges()) {
    const auto geo = detail::edge_geometry(x, e, spec.desired_bearing(e), ctrl.coincidence_floor);
    if (!geo.coincident) grad.head(nb) += ctrl.weight_bearing * geo.d * ctrl.params.bearing().value_basis(geo.c).transpose();
  }
  if (ctrl.uses_range()) {
    const int nr = ctrl.params.num_range_params();
    for (const auto& e : spec.graph().undirected_range_edges()) {
      const double q = (x.agent(e.j) - x.agent(e.i)).dot(spec.desired_bearing(e)) - spec.desired_range(e);
      grad.tail(nr) += ctrl.weight_range * ctrl.params.range().value_basis(q).transpose();
    }
  }
  return grad;
}

/// Contribution of one undirected edge (i < j) to the closed loop:
/// g_ij (force on i; agent j receives -g_ij), J = dg_ij/dx_i (= dg_ji/dx_j),
/// G = dg_ij/dalpha over the stacked parameter vector (G_ji = -G_ij).
struct PairTerms {
  Vec g;
  Mat jac_x;
  Mat jac_alpha;
  bool coincident = false;
};

inline PairTerms pair_terms(const Configuration& x, Edge e, const ControllerConfig& ctrl, bool with_jacobians) {
  const auto& spec = ctrl.spec;
  const auto& params = ctrl.params;
  const int n = x.dim();
  const int np = params.num_params();
  const Vec& goal = spec.desired_bearing(e);
  PairTerms out;
  out.g = Vec::Zero(n);
  if (with_jacobians) {
    out.jac_x = Mat::Zero(n, n);
    out.jac_alpha = Mat::Zero(n, np);
  }
  const Vec r = x.agent(e.j) - x.agent(e.i);
  const double d = r.norm();
  if (d >= ctrl.coincidence_floor) {
    const auto& f = params.bearing();
    const Vec beta = r / d;
    const double c = bearing_similarity(beta, goal);
    const Vec proj_goal = goal - c * beta;
    const double fv = f.value(c), f1 = f.derivative(c);
    const double wb = ctrl.weight_bearing;
    out.g.noalias() = -wb * (fv * beta + f1 * proj_goal);
    if (with_jacobians) {
      const double f2 = f.second_derivative(c);
      Mat inner = f2 * (c * beta - goal) * goal.transpose();
      inner.diagonal().array() += f1 * c - fv;
      out.jac_x.noalias() = (-wb / d) * (inner - (inner * beta) * beta.transpose());
      out.jac_alpha.leftCols(f.num_params()).noalias() =
          -wb * (beta * f.value_basis(c) + proj_goal * f.derivative_basis(c));
    }
  } else {
    out.coincident = true;
  }
  if (ctrl.uses_range() && spec.graph().has_range_edge(e.i, e.j)) {
    const auto& fr = params.range();
    const double wd = ctrl.weight_range;
    const double q = r.dot(goal) - spec.desired_range(e);
    out.g.noalias() -= wd * fr.derivative(q) * goal;
    if (with_jacobians) {
      out.jac_x.noalias() += (wd * fr.second_derivative(q)) * goal * goal.transpose();
      out.jac_alpha.rightCols(fr.num_params()).noalias() -= wd * goal * fr.derivative_basis(q);
    }
  }
  return out;
}

/// d phi / d x (stacked, no leader clamp).
inline Vec cost_gradient(const Configuration& x, const ControllerConfig& ctrl) {
  const int n = x.dim();
  Vec grad = Vec::Zero(static_cast<Eigen::Index>(n) * x.num_agents());
  for (const auto& e : ctrl.spec.graph().undirected_bearing_edges()) {
    const auto t = pair_terms(x, e, ctrl, false);
    grad.segment(n * e.i, n) += t.g;
    grad.segment(n * e.j, n) -= t.g;
  }
  return grad;
}

/// u_i = -sum_j g_ij, with leader velocities forced to zero.
inline Vec control(const Configuration& x, const ControllerConfig& ctrl) {
  Vec u = -cost_gradient(x, ctrl);
  for (int l : ctrl.leaders) u.segment(x.dim() * l, x.dim()).setZero();
  return u;
}

}  // namespace bearshape
