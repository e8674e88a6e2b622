#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bearshape/io.hpp"
#include "bearshape/metrics.hpp"
#include "bearshape/scenario.hpp"
#include "test_util.hpp"

using namespace bearshape;

namespace {

/// Polyline record; path lengths accumulated from the samples.
TrajectoryRecord polyline_record(const std::vector<Mat>& states, double dt = 0.1) {
  TrajectoryRecord rec;
  Vec acc = Vec::Zero(states.front().cols());
  for (std::size_t k = 0; k < states.size(); ++k) {
    if (k > 0) acc += (states[k] - states[k - 1]).colwise().norm().transpose();
    rec.times.push_back(dt * static_cast<double>(k));
    rec.states.push_back(states[k]);
    rec.path_lengths.push_back(acc);
  }
  return rec;
}

Mat point(double x, double y) {
  Mat m(2, 1);
  m << x, y;
  return m;
}

}  // namespace

TEST(Metrics, StationaryTrajectoryHasZeroLength) {
  const auto rec = polyline_record({point(1, 2), point(1, 2), point(1, 2)});
  EXPECT_EQ(metric_L_path(rec), 0.0);
  EXPECT_EQ(metric_L_diff(rec), 0.0);
}

TEST(Metrics, StraightLine) {
  std::vector<Mat> s;
  for (int k = 0; k <= 10; ++k) s.push_back(point(0.1 * k, 0.0));
  const auto rec = polyline_record(s);
  EXPECT_NEAR(metric_L_path(rec), 1.0, 1e-14);
  EXPECT_NEAR(metric_L_diff(rec), 0.0, 1e-14);
}

TEST(Metrics, SemicircleExcessIsPiMinusTwo) {
  std::vector<Mat> s;
  const int n = 20000;
  for (int k = 0; k <= n; ++k) {
    const double a = std::numbers::pi * k / n;
    s.push_back(point(std::cos(a), std::sin(a)));
  }
  const auto rec = polyline_record(s);
  EXPECT_NEAR(metric_L_diff(rec), std::numbers::pi - 2.0, 1e-7);
}

TEST(Metrics, PathExcessNonNegative) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Mat> s;
    for (int k = 0; k < 30; ++k) s.push_back(bearshape::testing::random_configuration(rng, 4).positions());
    EXPECT_GE(metric_L_diff(polyline_record(s)), -1e-12);
  }
}

TEST(Metrics, Deltas) {
  EXPECT_DOUBLE_EQ(*metric_delta(100.0, 90.0), 10.0);
  EXPECT_EQ(*metric_delta(5.0, 5.0), 0.0);
  EXPECT_FALSE(metric_delta(0.0, 1.0).has_value());
  EXPECT_NEAR(*metric_delta(45.17, 40.79), 9.70, 5e-3);
}

TEST(Metrics, MeanOfTrialDeltasDiffersFromDeltaOfMeans) {
  // Two trials with means 45.17 -> 40.79 but unequal per-trial ratios.
  std::vector<TrialMetrics> trials(2);
  trials[0].L_path_init = 30.0;
  trials[0].L_path_opt = 29.0;
  trials[1].L_path_init = 60.34;
  trials[1].L_path_opt = 52.58;
  for (auto& t : trials) t.delta_path = metric_delta(t.L_path_init, t.L_path_opt);
  const auto r = aggregate("x", trials);
  EXPECT_NEAR(r.mean_L_path_init, 45.17, 1e-12);
  EXPECT_NEAR(r.mean_L_path_opt, 40.79, 1e-12);
  const double of_means = *metric_delta(r.mean_L_path_init, r.mean_L_path_opt);
  EXPECT_NEAR(of_means, 9.70, 5e-3);
  EXPECT_NEAR(r.delta_path.mean, 0.5 * (*trials[0].delta_path + *trials[1].delta_path), 1e-12);
  EXPECT_GT(std::abs(r.delta_path.mean - of_means), 1.0);
}

TEST(Metrics, AggregateCountsUndefinedAndFailed) {
  std::vector<TrialMetrics> trials(4);
  trials[0].L_path_init = 10;
  trials[0].L_path_opt = 8;
  trials[0].delta_path = 20.0;
  trials[1].L_path_init = 10;
  trials[1].L_path_opt = 12;
  trials[1].delta_path = -20.0;
  trials[2].delta_path = std::nullopt;
  trials[3].failed = true;
  const auto r = aggregate("x", trials);
  EXPECT_EQ(r.failed, 1);
  EXPECT_EQ(r.delta_path.count, 2);
  EXPECT_EQ(r.delta_path.undefined, 1);
  EXPECT_DOUBLE_EQ(r.delta_path.mean, 0.0);
  EXPECT_DOUBLE_EQ(r.delta_path.median, 0.0);
  EXPECT_NEAR(r.improvement_fraction, 1.0 / 3.0, 1e-15);
}

TEST(Metrics, Scale) {
  Mat p(2, 3);
  p.setZero();
  EXPECT_EQ(metric_scale(Configuration(p)), 0.0);
  Mat q(2, 2);
  q << 0, 2, 0, 0;
  EXPECT_DOUBLE_EQ(metric_scale(Configuration(q)), 1.0);
  for (int n : {3, 5, 8}) EXPECT_NEAR(metric_scale(regular_polygon(n)), 1.0, 1e-14);
}

TEST(Metrics, InvariantUnderTimeRescaling) {
  std::mt19937_64 rng(9);
  std::vector<Mat> s;
  for (int k = 0; k < 20; ++k) s.push_back(bearshape::testing::random_configuration(rng, 3).positions());
  std::vector<Mat> s2;
  for (int k = 0; k < 20; ++k) s2.push_back(bearshape::testing::random_configuration(rng, 3).positions());
  const auto a = trial_metrics(0, polyline_record(s, 0.1), polyline_record(s2, 0.1));
  const auto b = trial_metrics(0, polyline_record(s, 0.37), polyline_record(s2, 0.02));
  EXPECT_EQ(a.delta_path, b.delta_path);
  EXPECT_EQ(a.delta_diff, b.delta_diff);
}

TEST(Io, ParamsRoundTripBitExact) {
  std::mt19937_64 rng(11);
  auto p = ReshapingParams::initial(7, true);
  Vec alpha = p.alpha() + bearshape::testing::random_vector(rng, p.num_params(), 1e-3);
  p = p.with_alpha(alpha);
  const auto text = io::params_to_json(p).dump();
  const auto back = io::params_from_json(io::json::parse(text));
  ASSERT_EQ(back.num_params(), p.num_params());
  for (int k = 0; k < alpha.size(); ++k) EXPECT_EQ(back.alpha()[k], p.alpha()[k]);
  EXPECT_EQ(back.bearing().grid().size(), 7);
}

TEST(Io, SpecRoundTrip) {
  const auto spec = bearshape::testing::pentagon_spec(true);
  const auto back = io::spec_from_json(io::json::parse(io::spec_to_json(spec).dump()));
  EXPECT_EQ(back.num_agents(), spec.num_agents());
  EXPECT_EQ(back.graph().undirected_bearing_edges(), spec.graph().undirected_bearing_edges());
  EXPECT_EQ(back.graph().undirected_range_edges(), spec.graph().undirected_range_edges());
  EXPECT_EQ((back.desired().positions() - spec.desired().positions()).norm(), 0.0);
}

TEST(Io, SpecParseErrors) {
  auto expect_parse_error = [](const char* text) {
    try {
      io::spec_from_json(io::json::parse(text));
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParse) << text;
    }
  };
  expect_parse_error(R"({"n": 2, "agents": 2, "bearing_edges": [[0, 1]]})");
  expect_parse_error(R"({"n": 2, "agents": 2, "bearing_edges": [[0, 1]], "desired": [[0, 0]]})");
  expect_parse_error(R"({"n": 2, "agents": 2, "bearing_edges": [[0]], "desired": [[0, 0], [1, 0]]})");
}

TEST(Io, ReportIsPureFunctionOfRecords) {
  std::mt19937_64 rng(13);
  std::vector<TrialMetrics> trials;
  for (int t = 0; t < 5; ++t) {
    std::vector<Mat> a, b;
    for (int k = 0; k < 10; ++k) {
      a.push_back(bearshape::testing::random_configuration(rng, 3).positions());
      b.push_back(bearshape::testing::random_configuration(rng, 3).positions());
    }
    trials.push_back(trial_metrics(t, polyline_record(a), polyline_record(b)));
  }
  const auto first = io::report_to_json(aggregate("r", trials)).dump();
  const auto second = io::report_to_json(aggregate("r", trials)).dump();
  EXPECT_EQ(first, second);
  EXPECT_EQ(io::report_csv(aggregate("r", trials)), io::report_csv(aggregate("r", trials)));
}

TEST(Io, TrajectoryCsvLayout) {
  const auto rec = polyline_record({point(0, 0), point(1, 0)});
  const auto csv = io::trajectory_csv(rec);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,agent,x,y");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
