#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

#include "bearshape/error.hpp"

namespace bearshape {

/// Uniform knot grid, stored ascending: t_0 = lo < ... < t_{K-1} = hi.
/// The "top" knot t_{K-1} is the anchor of the parameterization.
class SplineGrid {
 public:
  SplineGrid() = default;
  SplineGrid(double lo, double hi, int knots) : lo_(lo), hi_(hi), k_(knots) {
    if (knots < 3) throw Error(ErrorCode::kInvalidArgument, "spline grid needs at least 3 knots");
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
      throw Error(ErrorCode::kInvalidArgument, "spline grid span must be finite and increasing");
  }

  static SplineGrid bearing(int knots) { return SplineGrid(-1.0, 1.0, knots); }
  static SplineGrid symmetric(double half_span, int knots) { return SplineGrid(-half_span, half_span, knots); }

  int size() const { return k_; }
  int intervals() const { return k_ - 1; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double step() const { return (hi_ - lo_) / (k_ - 1); }
  double knot(int j) const { return j == k_ - 1 ? hi_ : lo_ + (hi_ - lo_) * j / (k_ - 1); }

  /// Interval j covers [t_j, t_{j+1}); points below t_0 map to 0 and points at or
  /// above t_{K-1} map to the top interval. At an interior knot the interval on the
  /// increasing side governs (right continuity of the piecewise-constant f'').
  int locate(double x) const {
    if (x <= lo_) return 0;
    if (x >= hi_) return k_ - 2;
    int j = static_cast<int>(std::floor((x - lo_) / step()));
    j = std::clamp(j, 0, k_ - 2);
    // Snap against rounding in the division.
    if (x < knot(j)) j = std::max(j - 1, 0);
    if (j + 1 <= k_ - 2 && x >= knot(j + 1)) j = j + 1;
    return j;
  }

  /// Index of the knot equal to x within tol, or -1.
  int find_knot(double x, double tol = 1e-12) const {
    for (int j = 0; j < k_; ++j)
      if (std::abs(knot(j) - x) <= tol) return j;
    return -1;
  }

  friend bool operator==(const SplineGrid& a, const SplineGrid& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_ && a.k_ == b.k_;
  }

 private:
  double lo_ = -1.0;
  double hi_ = 1.0;
  int k_ = 3;
};

/// C^1 piecewise-quadratic function linear in its parameters.
///
/// Interval j is expanded about its upper knot:
///   Q_j(x) = v_j + s_j (x - t_{j+1}) + a_j (x - t_{j+1})^2.
/// Parameters, from the top knot downward:
///   alpha = (v_{K-2}, s_{K-2}, a_{K-2}, a_{K-3}, ..., a_0),  dim = K + 1.
/// Value and slope continuity fix the remaining coefficients:
///   v_{j-1} = v_j - s_j h + a_j h^2,   s_{j-1} = s_j - 2 a_j h.
class QuadraticSpline {
 public:
  using Vec = Eigen::VectorXd;
  using Mat = Eigen::MatrixXd;
  using RowVec = Eigen::RowVectorXd;

  QuadraticSpline() = default;
  QuadraticSpline(SplineGrid grid, Vec alpha) : grid_(grid), alpha_(std::move(alpha)) {
    if (alpha_.size() != num_params(grid_)) throw Error(ErrorCode::kInvalidArgument, "alpha has wrong dimension for grid");
    if (!alpha_.allFinite()) throw Error(ErrorCode::kInvalidArgument, "alpha has non-finite entries");
    map_ = std::make_shared<const Mat>(coefficient_map(grid_));
    coeffs_ = *map_ * alpha_;
  }

  static int num_params(const SplineGrid& grid) { return grid.size() + 1; }

  /// F: rows (3j, 3j+1, 3j+2) give (v_j, s_j, a_j) of interval j as linear forms in alpha.
  static Mat coefficient_map(const SplineGrid& grid) {
    const int m = grid.intervals();
    const int p = num_params(grid);
    const double h = grid.step();
    Mat f = Mat::Zero(3 * m, p);
    const int top = m - 1;
    f(3 * top, 0) = 1.0;
    f(3 * top + 1, 1) = 1.0;
    f(3 * top + 2, 2) = 1.0;
    for (int j = top; j > 0; --j) {
      f.row(3 * (j - 1)) = f.row(3 * j) - h * f.row(3 * j + 1) + h * h * f.row(3 * j + 2);
      f.row(3 * (j - 1) + 1) = f.row(3 * j + 1) - 2.0 * h * f.row(3 * j + 2);
      f(3 * (j - 1) + 2, 2 + (top - (j - 1))) = 1.0;
    }
    return f;
  }

  const SplineGrid& grid() const { return grid_; }
  const Vec& alpha() const { return alpha_; }
  int num_params() const { return static_cast<int>(alpha_.size()); }

  double value(double x) const {
    const int j = grid_.locate(x);
    const double z = x - grid_.knot(j + 1);
    return coeffs_[3 * j] + z * (coeffs_[3 * j + 1] + z * coeffs_[3 * j + 2]);
  }
  double derivative(double x) const {
    const int j = grid_.locate(x);
    const double z = x - grid_.knot(j + 1);
    return coeffs_[3 * j + 1] + 2.0 * z * coeffs_[3 * j + 2];
  }
  /// Piecewise constant and right continuous; at the top knot the top interval governs.
  double second_derivative(double x) const { return 2.0 * coeffs_[3 * grid_.locate(x) + 2]; }

  /// d value(x) / d alpha (independent of alpha).
  RowVec value_basis(double x) const { return basis(x, 0); }
  RowVec derivative_basis(double x) const { return basis(x, 1); }
  RowVec second_derivative_basis(double x) const { return basis(x, 2); }

  /// Per-interval (v, s, a).
  double coefficient(int interval, int order) const { return coeffs_[3 * interval + order]; }

  QuadraticSpline with_alpha(Vec alpha) const { return QuadraticSpline(grid_, std::move(alpha)); }

 private:
  RowVec basis(double x, int order) const {
    const Mat& f = *map_;
    const int j = grid_.locate(x);
    const double z = x - grid_.knot(j + 1);
    switch (order) {
      case 0: return f.row(3 * j) + z * f.row(3 * j + 1) + z * z * f.row(3 * j + 2);
      case 1: return f.row(3 * j + 1) + 2.0 * z * f.row(3 * j + 2);
      default: return 2.0 * f.row(3 * j + 2);
    }
  }

  SplineGrid grid_;
  Vec alpha_;
  std::shared_ptr<const Mat> map_;
  Vec coeffs_;
};

/// Interpolates `target` at every knot; the extra degree of freedom is the
/// slope at the top knot, taken from the one-sided three-point difference of
/// the target with the knot spacing as step (exact for quadratics).
inline Eigen::VectorXd fit_initial_params(const std::function<double(double)>& target, const SplineGrid& grid) {
  const int k = grid.size();
  const double h = grid.step();
  Eigen::VectorXd y(k);
  for (int j = 0; j < k; ++j) y[j] = target(grid.knot(j));
  Eigen::VectorXd alpha(k + 1);
  double v = y[k - 1];
  double s = (3.0 * y[k - 1] - 4.0 * y[k - 2] + y[k - 3]) / (2.0 * h);
  alpha[0] = v;
  alpha[1] = s;
  for (int j = k - 2; j >= 0; --j) {
    const double a = (y[j] - v + s * h) / (h * h);
    alpha[2 + (k - 2 - j)] = a;
    v = y[j];
    s = s - 2.0 * a * h;
  }
  return alpha;
}

inline double initial_bearing_shape(double c) {
  const double th = std::acos(std::clamp(c, -1.0, 1.0));
  return 0.5 * th * th;
}

inline double initial_range_shape(double q) { return 0.5 * q * q; }

}  // namespace bearshape
