#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <utility>
#include <vector>

#include "bearshape/error.hpp"

namespace bearshape {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Edge {
  int i = 0;
  int j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Agent positions stored column-wise (dim x N). Column-major storage makes
/// `data()` the agent-major stacked vector x = stack(x_1, ..., x_N).
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(Mat positions) : pos_(std::move(positions)) {
    if (!pos_.allFinite()) throw Error(ErrorCode::kInvalidArgument, "configuration has non-finite coordinates");
  }
  static Configuration from_stacked(const Vec& x, int dim) {
    if (dim <= 0 || x.size() % dim != 0) throw Error(ErrorCode::kInvalidArgument, "stacked vector size not a multiple of dim");
    return Configuration(Eigen::Map<const Mat>(x.data(), dim, x.size() / dim));
  }

  int dim() const { return static_cast<int>(pos_.rows()); }
  int num_agents() const { return static_cast<int>(pos_.cols()); }
  auto agent(int i) const { return pos_.col(i); }
  const Mat& positions() const { return pos_; }
  Vec stacked() const { return Eigen::Map<const Vec>(pos_.data(), pos_.size()); }

  Vec centroid() const { return pos_.rowwise().mean(); }

  /// Largest pairwise distance.
  double diameter() const {
    double best = 0.0;
    for (int a = 0; a < num_agents(); ++a)
      for (int b = a + 1; b < num_agents(); ++b) best = std::max(best, (pos_.col(a) - pos_.col(b)).norm());
    return best;
  }

  Configuration transformed(double gamma, const Vec& t) const {
    Mat p = (gamma * pos_).colwise() + t;
    return Configuration(std::move(p));
  }

 private:
  Mat pos_;
};

/// Undirected interaction graph. Edge lists are kept closed under reversal;
/// `undirected_*` return each pair once with i < j.
class FormationGraph {
 public:
  FormationGraph() = default;
  FormationGraph(int num_agents, const std::vector<Edge>& bearing_edges, const std::vector<Edge>& range_edges)
      : n_(num_agents) {
    if (num_agents <= 0) throw Error(ErrorCode::kInvalidArgument, "num_agents must be positive");
    bearing_ = close(bearing_edges);
    range_ = close(range_edges);
    for (const auto& e : range_) {
      if (!std::binary_search(bearing_.begin(), bearing_.end(), e))
        throw Error(ErrorCode::kInvalidArgument, "range edge not contained in bearing edges");
    }
    neighbours_.assign(n_, {});
    for (const auto& e : bearing_) neighbours_[e.i].push_back(e.j);
  }

  int num_agents() const { return n_; }
  const std::vector<Edge>& bearing_edges() const { return bearing_; }
  const std::vector<Edge>& range_edges() const { return range_; }
  const std::vector<int>& neighbours(int i) const { return neighbours_[i]; }
  std::vector<Edge> undirected_bearing_edges() const { return half(bearing_); }
  std::vector<Edge> undirected_range_edges() const { return half(range_); }
  bool has_range_edge(int i, int j) const { return std::binary_search(range_.begin(), range_.end(), Edge{i, j}); }

  FormationGraph with_range_edges(const std::vector<Edge>& range_edges) const {
    return FormationGraph(n_, half(bearing_), range_edges);
  }

 private:
  std::vector<Edge> close(const std::vector<Edge>& edges) const {
    std::set<Edge> out;
    for (const auto& e : edges) {
      if (e.i == e.j) throw Error(ErrorCode::kInvalidArgument, "self-loop edge");
      if (e.i < 0 || e.j < 0 || e.i >= n_ || e.j >= n_) throw Error(ErrorCode::kInvalidArgument, "edge index out of range");
      out.insert(e);
      out.insert(Edge{e.j, e.i});
    }
    return {out.begin(), out.end()};
  }
  static std::vector<Edge> half(const std::vector<Edge>& edges) {
    std::vector<Edge> out;
    for (const auto& e : edges)
      if (e.i < e.j) out.push_back(e);
    return out;
  }

  int n_ = 0;
  std::vector<Edge> bearing_;
  std::vector<Edge> range_;
  std::vector<std::vector<int>> neighbours_;
};

inline double measure_range(const Configuration& x, Edge e) {
  const double d = (x.agent(e.j) - x.agent(e.i)).norm();
  if (d == 0.0) throw Error(ErrorCode::kCoincidentAgents, "agents coincide on edge");
  return d;
}

inline Vec measure_bearing(const Configuration& x, Edge e) {
  Vec r = x.agent(e.j) - x.agent(e.i);
  const double d = r.norm();
  if (d == 0.0) throw Error(ErrorCode::kCoincidentAgents, "agents coincide on edge");
  return r / d;
}

/// Cosine between current and desired bearing, clamped to [-1, 1].
inline double bearing_similarity(const Vec& beta, const Vec& beta_goal) {
  return std::clamp(beta_goal.dot(beta), -1.0, 1.0);
}

/// Graph plus desired configuration with cached desired bearings and ranges.
class FormationSpec {
 public:
  FormationSpec() = default;
  FormationSpec(FormationGraph graph, Configuration desired) : graph_(std::move(graph)), desired_(std::move(desired)) {
    if (graph_.num_agents() != desired_.num_agents())
      throw Error(ErrorCode::kInvalidArgument, "desired configuration size does not match graph");
    for (const auto& e : graph_.bearing_edges()) {
      if ((desired_.agent(e.j) - desired_.agent(e.i)).norm() == 0.0)
        throw Error(ErrorCode::kDegenerate, "desired positions coincide on an edge");
      bearing_goal_.push_back(measure_bearing(desired_, e));
      range_goal_.push_back(measure_range(desired_, e));
    }
  }

  const FormationGraph& graph() const { return graph_; }
  const Configuration& desired() const { return desired_; }
  int dim() const { return desired_.dim(); }
  int num_agents() const { return graph_.num_agents(); }

  const Vec& desired_bearing(Edge e) const { return bearing_goal_[index(e)]; }
  double desired_range(Edge e) const { return range_goal_[index(e)]; }

  FormationSpec with_range_edges(const std::vector<Edge>& range_edges) const {
    return FormationSpec(graph_.with_range_edges(range_edges), desired_);
  }

 private:
  std::size_t index(Edge e) const {
    const auto& edges = graph_.bearing_edges();
    auto it = std::lower_bound(edges.begin(), edges.end(), e);
    if (it == edges.end() || !(*it == e)) throw Error(ErrorCode::kInvalidArgument, "edge not in bearing graph");
    return static_cast<std::size_t>(it - edges.begin());
  }

  FormationGraph graph_;
  Configuration desired_;
  std::vector<Vec> bearing_goal_;
  std::vector<double> range_goal_;
};

struct SimilarityFit {
  bool matches = false;
  double gamma = 1.0;
  Vec translation;
  double residual = 0.0;  // max_i |a_i - (gamma b_i + t)|
};

namespace detail {
inline double rms_radius(const Mat& centered) {
  return std::sqrt(centered.colwise().squaredNorm().mean());
}

inline SimilarityFit fit_transform(const Configuration& a, const Configuration& b, double tol, bool fix_scale) {
  if (a.num_agents() != b.num_agents() || a.dim() != b.dim())
    throw Error(ErrorCode::kInvalidArgument, "configurations differ in size");
  const Vec ca = a.centroid();
  const Vec cb = b.centroid();
  SimilarityFit fit;
  if (!fix_scale) {
    const double rb = rms_radius(b.positions().colwise() - cb);
    if (rb == 0.0) throw Error(ErrorCode::kDegenerate, "reference configuration has zero spread; scale unresolvable");
    fit.gamma = rms_radius(a.positions().colwise() - ca) / rb;
  }
  fit.translation = ca - fit.gamma * cb;
  const Mat diff = a.positions() - b.transformed(fit.gamma, fit.translation).positions();
  fit.residual = diff.colwise().norm().maxCoeff();
  fit.matches = fit.gamma > 0.0 && fit.residual <= tol;
  return fit;
}
}  // namespace detail

/// a ~ gamma * b + t with gamma > 0. Scale is the ratio of RMS radii about the centroids.
inline SimilarityFit is_similar(const Configuration& a, const Configuration& b, double tol) {
  return detail::fit_transform(a, b, tol, false);
}

/// a ~ b + t.
inline SimilarityFit is_congruent(const Configuration& a, const Configuration& b, double tol) {
  return detail::fit_transform(a, b, tol, true);
}

}  // namespace bearshape
