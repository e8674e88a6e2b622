#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bearshape/error.hpp"
#include "bearshape/formation.hpp"

namespace bearshape {

/// Regular N-gon of the given circumradius centred at the origin; vertex k at angle 2 pi k / N.
inline Configuration regular_polygon(int agents, double radius = 1.0) {
  Mat p(2, agents);
  for (int k = 0; k < agents; ++k) {
    const double th = 2.0 * std::numbers::pi * k / agents;
    p(0, k) = radius * std::cos(th);
    p(1, k) = radius * std::sin(th);
  }
  return Configuration(std::move(p));
}

/// Cycle plus a fan of chords from vertex 0: 2N - 3 edges, a triangulated polygon.
inline std::vector<Edge> polygon_edges(int agents) {
  std::vector<Edge> edges;
  for (int k = 0; k < agents; ++k) edges.push_back({std::min(k, (k + 1) % agents), std::max(k, (k + 1) % agents)});
  for (int k = 2; k <= agents - 2; ++k) edges.push_back({0, k});
  return edges;
}

struct SamplingBox {
  Vec lo;
  Vec hi;
  static SamplingBox square(double half_width, int dim = 2) {
    return {Vec::Constant(dim, -half_width), Vec::Constant(dim, half_width)};
  }
};

struct Scenario {
  FormationSpec spec;
  std::vector<Configuration> ic_train;
  std::vector<Configuration> ic_test;
  std::uint64_t seed = 0;
  SamplingBox box;
};

enum class PolygonShape { kEquilateral, kPerturbed };

/// Counter-based sub-stream so train and test draws never overlap.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

/// Uniform samples in the box; rejects draws where a connected pair is closer than `min_gap`.
inline std::vector<Configuration> sample_initial_conditions(const FormationGraph& graph, const SamplingBox& box,
                                                           int count, double min_gap, std::mt19937_64& rng,
                                                           int max_rejections = 10000) {
  std::vector<Configuration> out;
  const int dim = static_cast<int>(box.lo.size());
  const auto edges = graph.undirected_bearing_edges();
  int rejected = 0;
  while (static_cast<int>(out.size()) < count) {
    Mat p(dim, graph.num_agents());
    for (int i = 0; i < graph.num_agents(); ++i)
      for (int d = 0; d < dim; ++d) p(d, i) = std::uniform_real_distribution<double>(box.lo[d], box.hi[d])(rng);
    bool ok = true;
    for (const auto& e : edges) ok = ok && (p.col(e.j) - p.col(e.i)).norm() >= min_gap;
    if (ok) {
      out.emplace_back(std::move(p));
    } else if (++rejected > max_rejections) {
      throw Error(ErrorCode::kRejectionExhausted, "could not sample separated initial conditions");
    }
  }
  return out;
}

struct ScenarioOptions {
  int agents = 5;
  PolygonShape shape = PolygonShape::kEquilateral;
  double radius = 1.0;
  double box_half_width = 5.0;
  int train_count = 7;
  int test_count = 200;
  std::uint64_t seed = 1;
  double guard_relative = 1e-4;
  /// Relative spread of vertex radii for the perturbed polygon.
  double perturbation = 0.3;
};

/// Custom formation; only the box, counts, seed and guard fields of `opt` are used.
inline Scenario gen_scenario(const FormationSpec& spec, const ScenarioOptions& opt) {
  const Configuration& desired = spec.desired();
  Scenario sc;
  sc.spec = spec;
  sc.seed = opt.seed;
  sc.box = SamplingBox::square(opt.box_half_width, spec.dim());
  const double gap = opt.guard_relative * desired.diameter();
  auto train_rng = substream(opt.seed, 1);
  auto test_rng = substream(opt.seed, 2);
  sc.ic_train = sample_initial_conditions(sc.spec.graph(), sc.box, opt.train_count, gap, train_rng);
  sc.ic_test = sample_initial_conditions(sc.spec.graph(), sc.box, opt.test_count, gap, test_rng);
  return sc;
}

/// Desired shape with no range edges; cases add range edges via FormationSpec::with_range_edges.
inline Scenario gen_scenario(const ScenarioOptions& opt) {
  if (opt.agents < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two agents");
  Configuration desired = regular_polygon(opt.agents, opt.radius);
  if (opt.shape == PolygonShape::kPerturbed) {
    auto rng = substream(opt.seed, 0);
    Mat p = desired.positions();
    for (int k = 0; k < opt.agents; ++k)
      p.col(k) *= 1.0 + opt.perturbation * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    desired = Configuration(std::move(p));
  }
  return gen_scenario(FormationSpec(FormationGraph(opt.agents, polygon_edges(opt.agents), {}), desired), opt);
}

}  // namespace bearshape
