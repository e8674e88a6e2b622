#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>

#include "bearshape/controller.hpp"
#include "bearshape/formation.hpp"
#include "bearshape/reshaping.hpp"
#include "bearshape/scenario.hpp"

namespace bearshape::testing {

inline Configuration random_configuration(std::mt19937_64& rng, int agents, int dim = 2, double half_width = 3.0) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  Mat p(dim, agents);
  for (int i = 0; i < agents; ++i)
    for (int d = 0; d < dim; ++d) p(d, i) = u(rng);
  return Configuration(std::move(p));
}

inline Vec random_vector(std::mt19937_64& rng, int size, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(size);
  for (int i = 0; i < size; ++i) v[i] = g(rng);
  return v;
}

/// Central differences of a scalar function of a vector.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (int k = 0; k < x.size(); ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Central differences of a vector function; column k is d f / d x_k.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h) {
  const Vec f0 = f(x);
  Mat jac(f0.size(), x.size());
  for (int k = 0; k < x.size(); ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    jac.col(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-8) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

/// Feasible bearing parameters built from random strictly negative knot slopes
/// (the slope sequence plus f(1) = 0 determines the spline uniquely).
inline Vec random_feasible_bearing_alpha(std::mt19937_64& rng, const SplineGrid& grid) {
  std::uniform_real_distribution<double> slope(0.2, 3.0);
  const int k = grid.size();
  const double h = grid.step();
  Vec alpha(k + 1);
  double s = -slope(rng);
  alpha[0] = 0.0;
  alpha[1] = s;
  for (int j = k - 2; j >= 0; --j) {
    const double s_below = -slope(rng);
    const double a = (s - s_below) / (2.0 * h);
    alpha[2 + (k - 2 - j)] = a;
    s = s_below;
  }
  return alpha;
}

/// Feasible range parameters: random positive slopes above 0, negative below, convex end pieces.
inline Vec random_feasible_range_alpha(std::mt19937_64& rng, const SplineGrid& grid) {
  std::uniform_real_distribution<double> mag(0.3, 2.0);
  const int k = grid.size();
  const int zero = grid.find_knot(0.0);
  const double h = grid.step();
  std::vector<double> slopes(k);
  for (int j = 0; j < k; ++j) slopes[j] = j == zero ? 0.0 : (j > zero ? 1.0 : -1.0) * mag(rng) * std::abs(grid.knot(j));
  // Convex end intervals.
  slopes[k - 1] = std::max(slopes[k - 1], slopes[k - 2] + 0.1);
  slopes[0] = std::min(slopes[0], slopes[1] - 0.1);
  // Value at the top knot from integrating the piecewise-linear slope from 0.
  double v_top = 0.0;
  for (int j = zero; j < k - 1; ++j) v_top += 0.5 * (slopes[j] + slopes[j + 1]) * h;
  Vec alpha(k + 1);
  alpha[0] = v_top;
  alpha[1] = slopes[k - 1];
  for (int j = k - 2; j >= 0; --j) alpha[2 + (k - 2 - j)] = (slopes[j + 1] - slopes[j]) / (2.0 * h);
  return alpha;
}

inline FormationSpec pentagon_spec(bool full_range = false) {
  const auto edges = polygon_edges(5);
  return FormationSpec(FormationGraph(5, edges, full_range ? edges : std::vector<Edge>{}), regular_polygon(5));
}

}  // namespace bearshape::testing
