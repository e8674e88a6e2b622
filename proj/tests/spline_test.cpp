#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bearshape/reshaping.hpp"
#include "bearshape/spline.hpp"
#include "test_util.hpp"

namespace bearshape {
namespace {

constexpr double kPi = std::numbers::pi;

ReshapingParams initial_with_range() { return ReshapingParams::initial(7, true, 7, 10.0); }

TEST(Grid, KnotsAndLocate) {
  const auto g = SplineGrid::bearing(7);
  EXPECT_EQ(g.knot(0), -1.0);
  EXPECT_EQ(g.knot(3), 0.0);
  EXPECT_EQ(g.knot(6), 1.0);
  EXPECT_NEAR(g.step(), 1.0 / 3.0, 1e-15);
  for (int j = 0; j + 1 < g.size(); ++j) EXPECT_NEAR(g.knot(j + 1) - g.knot(j), g.step(), 1e-12);
  // Right-open intervals: an interior knot belongs to the interval above it.
  EXPECT_EQ(g.locate(1.0), 5);
  EXPECT_EQ(g.locate(0.0), 3);
  EXPECT_EQ(g.locate(1e-9), 3);
  EXPECT_EQ(g.locate(-1e-9), 2);
  EXPECT_EQ(g.locate(-1.0), 0);
  for (int j = 0; j < 6; ++j) EXPECT_EQ(g.locate(g.knot(j)), j);
  EXPECT_THROW(SplineGrid(-1, 1, 2), Error);
  EXPECT_THROW(SplineGrid(1, -1, 5), Error);
}

TEST(Spline, CoefficientMapSatisfiesContinuity) {
  std::mt19937_64 rng(1);
  for (int k : {3, 5, 7, 12}) {
    const auto g = SplineGrid::bearing(k);
    const Mat f = QuadraticSpline::coefficient_map(g);
    EXPECT_EQ(f.cols(), k + 1);
    EXPECT_EQ(f.rows(), 3 * (k - 1));
    const Vec a = f * testing::random_vector(rng, k + 1);
    const double h = g.step();
    // Interval j-1 expanded at t_j must match interval j evaluated at t_j.
    for (int j = 1; j < k - 1; ++j) {
      const double v = a[3 * j], s = a[3 * j + 1], c = a[3 * j + 2];
      EXPECT_NEAR(a[3 * (j - 1)], v - s * h + c * h * h, 1e-12 * (1 + std::abs(v)));
      EXPECT_NEAR(a[3 * (j - 1) + 1], s - 2 * c * h, 1e-12 * (1 + std::abs(s)));
    }
    Eigen::FullPivLU<Mat> lu(f);
    EXPECT_EQ(lu.rank(), k + 1);
  }
}

TEST(Spline, InitialBearingFitValues) {
  const auto p = ReshapingParams::initial();
  EXPECT_EQ(p.eval_f(ShapeKind::kBearing, 1.0), 0.0);
  EXPECT_NEAR(p.eval_f(ShapeKind::kBearing, -1.0), kPi * kPi / 2.0, 1e-12);
  for (int j = 0; j < 7; ++j) {
    const double c = p.bearing().grid().knot(j);
    EXPECT_NEAR(p.eval_f(ShapeKind::kBearing, c), initial_bearing_shape(c), 1e-13);
  }
  // Mid-interval error at 0.5; reference value from an independent numpy evaluation of the same construction.
  const double err = std::abs(p.eval_f(ShapeKind::kBearing, 0.5) - initial_bearing_shape(0.5));
  EXPECT_LT(err, 0.05);
  EXPECT_NEAR(err, 0.0010737889517529187, 1e-12);
}

TEST(Spline, InitialRangeFit) {
  const auto p = initial_with_range();
  EXPECT_NEAR(p.eval_f(ShapeKind::kRange, 0.0), 0.0, 1e-13);
  EXPECT_NEAR(p.eval_f_prime(ShapeKind::kRange, 0.0), 0.0, 1e-12);
  EXPECT_NEAR(p.eval_f_second(ShapeKind::kRange, 0.0), 1.0, 1e-12);
  // Central finite differences of the value agree with the second derivative away from knots.
  const double q = 1.7, h = 1e-4;
  const double fd = (p.eval_f(ShapeKind::kRange, q + h) - 2 * p.eval_f(ShapeKind::kRange, q) +
                     p.eval_f(ShapeKind::kRange, q - h)) / (h * h);
  EXPECT_NEAR(fd, p.eval_f_second(ShapeKind::kRange, q), 1e-5);
  // Extrapolation beyond the grid keeps the end quadratic, which is q^2/2 itself.
  EXPECT_NEAR(p.eval_f(ShapeKind::kRange, 14.0), 98.0, 1e-9);
  EXPECT_NEAR(p.eval_f(ShapeKind::kRange, -13.0), 84.5, 1e-9);
}

TEST(Spline, SlopeAtTopMatchesFiniteDifferenceOfFit) {
  const auto p = ReshapingParams::initial();
  const double h = 1e-6;
  const double fd = (p.eval_f(ShapeKind::kBearing, 1.0) - p.eval_f(ShapeKind::kBearing, 1.0 - h)) / h;
  EXPECT_NEAR(p.eval_f_prime(ShapeKind::kBearing, 1.0), fd, 1e-6);
  EXPECT_LT(p.eval_f_prime(ShapeKind::kBearing, 1.0), 0.0);
}

TEST(Spline, SecondDerivativeConvention) {
  // Single-piece quadratic with curvature coefficient 0.5.
  const SplineGrid g3(-1, 1, 3);
  Vec a(4);
  a << 0.0, -1.0, 0.5, 0.5;
  const QuadraticSpline one(g3, a);
  for (double x : {-1.0, -0.3, 0.0, 0.6, 1.0}) EXPECT_DOUBLE_EQ(one.second_derivative(x), 1.0);
  // Interior knot between a top interval with curvature coefficient 1 and a lower one with 2:
  // right continuity in c means the top interval governs, giving 2 * 1.
  Vec b(4);
  b << 0.0, -1.0, 1.0, 2.0;
  const QuadraticSpline two(g3, b);
  EXPECT_DOUBLE_EQ(two.second_derivative(0.0), 2.0);
  EXPECT_DOUBLE_EQ(two.second_derivative(-1e-12), 4.0);
  EXPECT_DOUBLE_EQ(two.second_derivative(0.5), 2.0);
  EXPECT_DOUBLE_EQ(two.second_derivative(1.0), 2.0);
  EXPECT_DOUBLE_EQ(two.second_derivative(-1.0), 4.0);
}

TEST(Spline, DomainErrors) {
  const auto p = ReshapingParams::initial();
  EXPECT_THROW(p.eval_f(ShapeKind::kBearing, 1.1), Error);
  EXPECT_THROW(p.eval_f_prime(ShapeKind::kBearing, -1.5), Error);
  EXPECT_NO_THROW(p.eval_f(ShapeKind::kBearing, 1.0 + 1e-12));
  EXPECT_THROW(p.eval_f(ShapeKind::kRange, 0.0), Error);
}

TEST(Spline, C1ContinuityAtKnots) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = SplineGrid::bearing(7);
    const QuadraticSpline s(g, testing::random_vector(rng, 8));
    for (int j = 1; j < 6; ++j) {
      const double t = g.knot(j);
      const int below = j - 1, above = j;
      const double z_below = t - g.knot(below + 1), z_above = t - g.knot(above + 1);
      const double v_below = s.coefficient(below, 0) + z_below * (s.coefficient(below, 1) + z_below * s.coefficient(below, 2));
      const double v_above = s.coefficient(above, 0) + z_above * (s.coefficient(above, 1) + z_above * s.coefficient(above, 2));
      const double d_below = s.coefficient(below, 1) + 2 * z_below * s.coefficient(below, 2);
      const double d_above = s.coefficient(above, 1) + 2 * z_above * s.coefficient(above, 2);
      const double scale = 1.0 + s.alpha().cwiseAbs().maxCoeff();
      EXPECT_LE(std::abs(v_below - v_above), 1e-12 * scale);
      EXPECT_LE(std::abs(d_below - d_above), 1e-12 * scale);
    }
  }
}

TEST(Spline, QuadraticReproduction) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double c0 = u(rng), c1 = u(rng), c2 = u(rng);
    auto quad = [&](double x) { return c0 + c1 * x + c2 * x * x; };
    const auto g = SplineGrid::symmetric(3.0, 9);
    const QuadraticSpline s(g, fit_initial_params(quad, g));
    std::uniform_real_distribution<double> xs(-3.0, 3.0);
    for (int k = 0; k < 1000; ++k) {
      const double x = xs(rng);
      EXPECT_NEAR(s.value(x), quad(x), 1e-10);
    }
  }
}

TEST(Spline, DerivativeMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  const auto g = SplineGrid::bearing(7);
  const QuadraticSpline s(g, testing::random_vector(rng, 8));
  std::uniform_real_distribution<double> xs(-1.0, 1.0);
  int checked = 0;
  while (checked < 1000) {
    const double x = xs(rng);
    const double dist = std::abs(std::remainder(x + 1.0, g.step()));
    if (dist < 1e-4) continue;
    const double h = 1e-6;
    const double fd = (s.value(x + h) - s.value(x - h)) / (2 * h);
    EXPECT_NEAR(s.derivative(x), fd, 1e-6 * (1 + std::abs(fd)));
    ++checked;
  }
}

TEST(Spline, LinearInParameters) {
  std::mt19937_64 rng(17);
  const auto g = SplineGrid::bearing(7);
  const Vec a1 = testing::random_vector(rng, 8), a2 = testing::random_vector(rng, 8);
  const QuadraticSpline s1(g, a1), s2(g, a2), s12(g, a1 + a2), s3(g, 2.5 * a1);
  std::uniform_real_distribution<double> xs(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const double x = xs(rng);
    EXPECT_NEAR(s12.value(x), s1.value(x) + s2.value(x), 1e-12);
    EXPECT_NEAR(s3.value(x), 2.5 * s1.value(x), 1e-12);
    EXPECT_NEAR(s1.value_basis(x).dot(a1), s1.value(x), 1e-12);
    EXPECT_NEAR(s1.derivative_basis(x).dot(a1), s1.derivative(x), 1e-12);
    EXPECT_NEAR(s1.second_derivative_basis(x).dot(a1), s1.second_derivative(x), 1e-12);
  }
}

TEST(Constraints, BearingConstraintsOnInitialFit) {
  const auto g = SplineGrid::bearing(7);
  const auto c = build_bearing_constraints(g);
  const auto p = ReshapingParams::initial();
  EXPECT_TRUE(c.feasible(p.bearing().alpha(), 1e-12));
  // Direct evaluation: every knot slope negative.
  for (int j = 0; j < 7; ++j) EXPECT_LT(p.bearing().derivative(g.knot(j)), 0.0);
  // The zero function satisfies the equality but not strict negativity.
  const Vec zero = Vec::Zero(8);
  EXPECT_NEAR((c.a_eq * zero - c.b_eq).norm(), 0.0, 0.0);
  EXPECT_FALSE(c.feasible(zero, 1e-12));
  Mat all(c.a_eq.rows() + c.a_in.rows(), 8);
  all << c.a_eq, c.a_in;
  EXPECT_EQ(Eigen::FullPivLU<Mat>(all).rank(), all.rows());
  EXPECT_EQ(all.rows(), 8);
}

TEST(Constraints, RangeConstraints) {
  const auto g = SplineGrid::symmetric(10.0, 7);
  const auto c = build_range_constraints(g);
  EXPECT_TRUE(c.feasible(fit_initial_params(initial_range_shape, g), 1e-12));
  EXPECT_FALSE(c.feasible(fit_initial_params([](double q) { return -0.5 * q * q; }, g), 0.0));
  const Vec flipped = fit_initial_params([](double q) { return -0.5 * q * q; }, g);
  EXPECT_LT(flipped[2], 0.0);  // top curvature
  EXPECT_FALSE(c.feasible(fit_initial_params([](double q) { return q; }, g), 1e-9));
  EXPECT_THROW(build_range_constraints(SplineGrid::symmetric(10.0, 6)), Error);
  // Flat just below 0: shrinking would cost nothing.
  Vec flat_below = fit_initial_params(initial_range_shape, g);
  flat_below[5] = 0.0;
  EXPECT_FALSE(c.feasible(flat_below, 0.0));
}

TEST(Constraints, RandomFeasibleSplinesAreMonotone) {
  std::mt19937_64 rng(21);
  const auto g = SplineGrid::bearing(7);
  const auto c = build_bearing_constraints(g);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec a = testing::random_feasible_bearing_alpha(rng, g);
    ASSERT_TRUE(c.feasible(a));
    const QuadraticSpline s(g, a);
    EXPECT_NEAR(s.value(1.0), 0.0, 1e-14);
    for (int k = 0; k <= 2000; ++k) EXPECT_LT(s.derivative(-1.0 + 2.0 * k / 2000), 0.0);
  }
  const auto rg = SplineGrid::symmetric(10.0, 7);
  const auto rc = build_range_constraints(rg);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec a = testing::random_feasible_range_alpha(rng, rg);
    ASSERT_TRUE(rc.feasible(a, 1e-9)) << rc.violation(a);
  }
}

TEST(Constraints, StackedBlocks) {
  const auto p = initial_with_range();
  const auto c = build_constraints(p);
  EXPECT_EQ(c.num_params(), 16);
  EXPECT_EQ(c.a_eq.rows(), 3);
  EXPECT_TRUE(c.feasible(p.alpha(), 1e-12));
  EXPECT_TRUE(c.equalities_only().feasible(p.alpha(), 1e-12));
}

}  // namespace
}  // namespace bearshape
