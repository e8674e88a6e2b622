#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

#include "bearshape/error.hpp"
#include "bearshape/spline.hpp"

namespace bearshape {

enum class ShapeKind { kBearing, kRange };

/// Bearing reshaping spline plus an optional range reshaping spline.
/// The optimization vector is stack(alpha_b, alpha_d).
class ReshapingParams {
 public:
  using Vec = Eigen::VectorXd;

  static constexpr double kDomainTol = 1e-9;

  ReshapingParams() = default;
  explicit ReshapingParams(QuadraticSpline bearing, std::optional<QuadraticSpline> range = std::nullopt)
      : bearing_(std::move(bearing)), range_(std::move(range)) {
    if (bearing_.grid().lo() != -1.0 || bearing_.grid().hi() != 1.0)
      throw Error(ErrorCode::kInvalidArgument, "bearing grid must span exactly [-1, 1]");
  }

  /// arccos^2/2 on the bearing grid and, when requested, q^2/2 on a symmetric range grid.
  static ReshapingParams initial(int bearing_knots = 7, bool with_range = false, int range_knots = 7,
                                 double range_half_span = 10.0) {
    const auto bg = SplineGrid::bearing(bearing_knots);
    QuadraticSpline b(bg, fit_initial_params(initial_bearing_shape, bg));
    if (!with_range) return ReshapingParams(std::move(b));
    const auto rg = SplineGrid::symmetric(range_half_span, range_knots);
    return ReshapingParams(std::move(b), QuadraticSpline(rg, fit_initial_params(initial_range_shape, rg)));
  }

  const QuadraticSpline& bearing() const { return bearing_; }
  bool has_range() const { return range_.has_value(); }
  const QuadraticSpline& range() const {
    if (!range_) throw Error(ErrorCode::kInvalidArgument, "parameters carry no range spline");
    return *range_;
  }
  const QuadraticSpline& spline(ShapeKind which) const { return which == ShapeKind::kBearing ? bearing_ : range(); }

  int num_bearing_params() const { return bearing_.num_params(); }
  int num_range_params() const { return range_ ? range_->num_params() : 0; }
  int num_params() const { return num_bearing_params() + num_range_params(); }
  /// Offset of `which` inside the stacked vector.
  int offset(ShapeKind which) const { return which == ShapeKind::kBearing ? 0 : num_bearing_params(); }

  Vec alpha() const {
    Vec a(num_params());
    a.head(num_bearing_params()) = bearing_.alpha();
    if (range_) a.tail(num_range_params()) = range_->alpha();
    return a;
  }

  ReshapingParams with_alpha(const Vec& alpha) const {
    if (alpha.size() != num_params()) throw Error(ErrorCode::kInvalidArgument, "alpha has wrong dimension");
    ReshapingParams out(bearing_.with_alpha(alpha.head(num_bearing_params())));
    if (range_) out.range_ = range_->with_alpha(alpha.tail(num_range_params()));
    return out;
  }

  /// Bearing arguments within kDomainTol of [-1, 1] are clamped; beyond that it is a domain error.
  /// Range arguments outside the grid use the end interval's quadratic.
  double eval_f(ShapeKind which, double chi) const { return spline(which).value(checked(which, chi)); }
  double eval_f_prime(ShapeKind which, double chi) const { return spline(which).derivative(checked(which, chi)); }
  double eval_f_second(ShapeKind which, double chi) const {
    return spline(which).second_derivative(checked(which, chi));
  }

 private:
  static double checked(ShapeKind which, double chi) {
    if (!std::isfinite(chi)) throw Error(ErrorCode::kDomain, "non-finite reshaping argument");
    if (which == ShapeKind::kRange) return chi;
    if (chi > 1.0 + kDomainTol || chi < -1.0 - kDomainTol)
      throw Error(ErrorCode::kDomain, "bearing similarity outside [-1, 1]");
    return std::clamp(chi, -1.0, 1.0);
  }

  QuadraticSpline bearing_;
  std::optional<QuadraticSpline> range_;
};

/// Linear constraints on alpha:  A_eq alpha = b_eq,  A_in alpha <= b_in.
/// Strict inequalities are stored with their margin folded into b_in.
struct ShapeConstraints {
  using Vec = Eigen::VectorXd;
  using Mat = Eigen::MatrixXd;

  Mat a_eq;
  Vec b_eq;
  Mat a_in;
  Vec b_in;
  std::vector<bool> strict;

  explicit ShapeConstraints(int num_params = 0)
      : a_eq(0, num_params), b_eq(0), a_in(0, num_params), b_in(0) {}

  int num_params() const { return static_cast<int>(a_eq.cols()); }

  void add_equality(const Eigen::RowVectorXd& row, double rhs) {
    a_eq.conservativeResize(a_eq.rows() + 1, Eigen::NoChange);
    a_eq.row(a_eq.rows() - 1) = row;
    b_eq.conservativeResize(b_eq.size() + 1);
    b_eq[b_eq.size() - 1] = rhs;
  }
  void add_inequality(const Eigen::RowVectorXd& row, double rhs, bool is_strict) {
    a_in.conservativeResize(a_in.rows() + 1, Eigen::NoChange);
    a_in.row(a_in.rows() - 1) = row;
    b_in.conservativeResize(b_in.size() + 1);
    b_in[b_in.size() - 1] = rhs;
    strict.push_back(is_strict);
  }

  /// Largest violation (0 when feasible).
  double violation(const Vec& alpha) const {
    double v = 0.0;
    if (a_eq.rows() > 0) v = std::max(v, (a_eq * alpha - b_eq).cwiseAbs().maxCoeff());
    if (a_in.rows() > 0) v = std::max(v, (a_in * alpha - b_in).maxCoeff());
    return v;
  }
  bool feasible(const Vec& alpha, double tol = 1e-8) const { return violation(alpha) <= tol; }

  /// Block-diagonal combination (this acts on the first block).
  ShapeConstraints stacked(const ShapeConstraints& other) const {
    const int p = num_params() + other.num_params();
    ShapeConstraints out(p);
    auto pad = [&](const Eigen::RowVectorXd& r, bool first) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p);
      if (first) row.head(num_params()) = r;
      else row.tail(other.num_params()) = r;
      return row;
    };
    for (int i = 0; i < a_eq.rows(); ++i) out.add_equality(pad(a_eq.row(i), true), b_eq[i]);
    for (int i = 0; i < other.a_eq.rows(); ++i) out.add_equality(pad(other.a_eq.row(i), false), other.b_eq[i]);
    for (int i = 0; i < a_in.rows(); ++i) out.add_inequality(pad(a_in.row(i), true), b_in[i], strict[i]);
    for (int i = 0; i < other.a_in.rows(); ++i)
      out.add_inequality(pad(other.a_in.row(i), false), other.b_in[i], other.strict[i]);
    return out;
  }

  /// Same equalities, no inequalities.
  ShapeConstraints equalities_only() const {
    ShapeConstraints out(num_params());
    out.a_eq = a_eq;
    out.b_eq = b_eq;
    return out;
  }
};

inline constexpr double kDefaultStrictMargin = 1e-6;

/// f(1) = 0, f'(1) <= 0, f'(chi_k) <= -margin at every other knot (including -1,
/// since f' is piecewise linear and must stay negative on the bottom interval).
inline ShapeConstraints build_bearing_constraints(const SplineGrid& grid, double margin = kDefaultStrictMargin) {
  QuadraticSpline basis(grid, Eigen::VectorXd::Zero(QuadraticSpline::num_params(grid)));
  ShapeConstraints c(basis.num_params());
  const double top = grid.knot(grid.size() - 1);
  c.add_equality(basis.value_basis(top), 0.0);
  c.add_inequality(basis.derivative_basis(top), 0.0, false);
  for (int j = grid.size() - 2; j >= 0; --j) c.add_inequality(basis.derivative_basis(grid.knot(j)), -margin, true);
  return c;
}

/// Parabola-like shape with minimum at 0: f(0) = 0, f'(0) = 0, sign(f') = sign(q) at knots,
/// slope at the top knot >= 0 and at the bottom knot <= 0, positive curvature on both end intervals
/// and on both intervals next to 0.
inline ShapeConstraints build_range_constraints(const SplineGrid& grid, double margin = kDefaultStrictMargin) {
  const int zero = grid.find_knot(0.0);
  if (zero < 0) throw Error(ErrorCode::kInvalidArgument, "range grid must contain 0 as a knot");
  QuadraticSpline basis(grid, Eigen::VectorXd::Zero(QuadraticSpline::num_params(grid)));
  ShapeConstraints c(basis.num_params());
  c.add_equality(basis.value_basis(0.0), 0.0);
  c.add_equality(basis.derivative_basis(0.0), 0.0);
  for (int j = 0; j < grid.size(); ++j) {
    if (j < zero) c.add_inequality(basis.derivative_basis(grid.knot(j)), -margin, true);
    if (j > zero) c.add_inequality(-basis.derivative_basis(grid.knot(j)), -margin, true);
  }
  // f_d''(0) > 0, read on both sides of the knot.
  const double half = 0.5 * grid.step();
  c.add_inequality(-basis.second_derivative_basis(grid.knot(zero) - half), -margin, true);
  c.add_inequality(-basis.second_derivative_basis(grid.knot(zero) + half), -margin, true);
  const int np = basis.num_params();
  // Raw coefficient rows: slope of the top interval at the top knot and the end-interval curvatures.
  Eigen::RowVectorXd slope_top = Eigen::RowVectorXd::Zero(np);
  slope_top[1] = 1.0;
  Eigen::RowVectorXd curv_top = Eigen::RowVectorXd::Zero(np);
  curv_top[2] = 1.0;
  Eigen::RowVectorXd curv_bottom = Eigen::RowVectorXd::Zero(np);
  curv_bottom[np - 1] = 1.0;
  c.add_inequality(-slope_top, 0.0, false);
  c.add_inequality(-curv_top, -margin, true);
  c.add_inequality(basis.derivative_basis(grid.knot(0)), 0.0, false);
  c.add_inequality(-curv_bottom, -margin, true);
  return c;
}

/// Constraints for the stacked parameter vector of `params`.
inline ShapeConstraints build_constraints(const ReshapingParams& params, double margin = kDefaultStrictMargin) {
  auto c = build_bearing_constraints(params.bearing().grid(), margin);
  if (params.has_range()) c = c.stacked(build_range_constraints(params.range().grid(), margin));
  return c;
}

}  // namespace bearshape
