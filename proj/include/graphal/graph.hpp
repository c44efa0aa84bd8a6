#pragma once

#include "graphal/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <span>
#include <utility>

namespace graphal {

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  double weight = 1.0;
};

/// Undirected attributed graph topology plus (optionally) the hidden ground
/// truth labels. Edges are stored with u < v; an empty label vector means the
/// ground truth is withheld.
class Graph {
 public:
  Graph() = default;

  Graph(NodeId node_count, int class_count, std::vector<Edge> edges,
        std::vector<ClassId> labels = {})
      : node_count_(node_count), class_count_(class_count), edges_(std::move(edges)),
        labels_(std::move(labels)) {
    if (node_count_ <= 0) throw DatasetError("graph needs at least one node");
    if (class_count_ <= 0) throw DatasetError("class count must be positive");
    for (auto& e : edges_) {
      if (e.u < 0 || e.v < 0 || e.u >= node_count_ || e.v >= node_count_)
        throw DatasetError("edge endpoint out of range: (" + std::to_string(e.u) + ", " +
                           std::to_string(e.v) + ")");
      if (e.u == e.v) throw DatasetError("self-loop on node " + std::to_string(e.u));
      if (!std::isfinite(e.weight) || e.weight <= 0.0)
        throw DatasetError("edge weights must be finite and positive");
      if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
      return std::pair(a.u, a.v) < std::pair(b.u, b.v);
    });
    for (std::size_t i = 1; i < edges_.size(); ++i) {
      if (edges_[i].u == edges_[i - 1].u && edges_[i].v == edges_[i - 1].v)
        throw DatasetError("duplicate edge (" + std::to_string(edges_[i].u) + ", " +
                           std::to_string(edges_[i].v) + ")");
    }
    if (!labels_.empty()) {
      if (static_cast<NodeId>(labels_.size()) != node_count_)
        throw DatasetError("label vector length does not match node count");
      for (ClassId y : labels_)
        if (y < 0 || y >= class_count_)
          throw DatasetError("class index " + std::to_string(y) + " outside [0, " +
                             std::to_string(class_count_) + ")");
    }
    build_adjacency();
  }

  NodeId node_count() const { return node_count_; }
  int class_count() const { return class_count_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }

  bool has_labels() const { return !labels_.empty(); }
  const std::vector<ClassId>& labels() const { return labels_; }

  std::span<const NodeId> neighbors(NodeId i) const {
    auto b = offsets_[static_cast<std::size_t>(i)];
    auto e = offsets_[static_cast<std::size_t>(i) + 1];
    return {adjacent_.data() + b, e - b};
  }
  std::span<const double> neighbor_weights(NodeId i) const {
    auto b = offsets_[static_cast<std::size_t>(i)];
    auto e = offsets_[static_cast<std::size_t>(i) + 1];
    return {adjacent_weight_.data() + b, e - b};
  }

  /// Same topology with the ground truth removed.
  Graph without_labels() const { return Graph(node_count_, class_count_, edges_); }

 private:
  void build_adjacency() {
    std::vector<std::size_t> degree(static_cast<std::size_t>(node_count_), 0);
    for (const auto& e : edges_) {
      ++degree[static_cast<std::size_t>(e.u)];
      ++degree[static_cast<std::size_t>(e.v)];
    }
    offsets_.assign(degree.size() + 1, 0);
    std::partial_sum(degree.begin(), degree.end(), offsets_.begin() + 1);
    adjacent_.resize(offsets_.back());
    adjacent_weight_.resize(offsets_.back());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (const auto& e : edges_) {
      auto iu = cursor[static_cast<std::size_t>(e.u)]++;
      adjacent_[iu] = e.v;
      adjacent_weight_[iu] = e.weight;
      auto iv = cursor[static_cast<std::size_t>(e.v)]++;
      adjacent_[iv] = e.u;
      adjacent_weight_[iv] = e.weight;
    }
  }

  NodeId node_count_ = 0;
  int class_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<ClassId> labels_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacent_;
  std::vector<double> adjacent_weight_;
};

/// Node feature matrix, one row per node. Sparse storage; bag-of-words
/// features are mostly zeros.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(SparseMatrix values) : values_(std::move(values)) {
    values_.makeCompressed();
    for (Eigen::Index k = 0; k < values_.nonZeros(); ++k)
      if (!std::isfinite(values_.valuePtr()[k])) throw DatasetError("non-finite feature value");
  }
  static FeatureMatrix from_dense(const Matrix& dense) {
    return FeatureMatrix(SparseMatrix(dense.sparseView(0.0, 0.0)));
  }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const SparseMatrix& sparse() const { return values_; }
  Matrix dense() const { return Matrix(values_); }

 private:
  SparseMatrix values_;
};

/// Normalized adjacency S = D̃^(-1/2) (A + I) D̃^(-1/2), D̃ = D + I.
class NormalizedAdjacency {
 public:
  explicit NormalizedAdjacency(SparseMatrix s) : s_(std::move(s)) {}
  const SparseMatrix& matrix() const { return s_; }
  Eigen::Index size() const { return s_.rows(); }

 private:
  SparseMatrix s_;
};

/// X̃ = S^hops X as a dense matrix (rows are the regression inputs).
struct PropagatedFeatures {
  Matrix values;
  int hops = 0;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  auto row(NodeId i) const { return values.row(static_cast<Eigen::Index>(i)); }
};

/// Induced subgraph with a contiguous re-indexing. `original_index[i]` is the
/// index node i had in the source graph.
struct Subgraph {
  Graph graph;
  FeatureMatrix features;
  std::vector<NodeId> original_index;
};

inline NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const auto n = static_cast<std::size_t>(g.node_count());
  std::vector<double> degree(n, 1.0);  // self-loop
  for (const auto& e : g.edges()) {
    degree[static_cast<std::size_t>(e.u)] += e.weight;
    degree[static_cast<std::size_t>(e.v)] += e.weight;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(n + 2 * g.edge_count());
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    triplets.emplace_back(ii, ii, 1.0 / degree[i]);
  }
  for (const auto& e : g.edges()) {
    const double value =
        e.weight / std::sqrt(degree[static_cast<std::size_t>(e.u)] *
                             degree[static_cast<std::size_t>(e.v)]);
    triplets.emplace_back(e.u, e.v, value);
    triplets.emplace_back(e.v, e.u, value);
  }
  SparseMatrix s(g.node_count(), g.node_count());
  s.setFromTriplets(triplets.begin(), triplets.end());
  s.makeCompressed();
  return NormalizedAdjacency(std::move(s));
}

inline PropagatedFeatures propagate_features(const NormalizedAdjacency& s, const Matrix& x,
                                             int hops) {
  detail::require(hops >= 0, "hop count must be non-negative");
  if (x.rows() != s.size())
    throw InvalidArgument("feature rows (" + std::to_string(x.rows()) +
                          ") do not match adjacency size (" + std::to_string(s.size()) + ")");
  PropagatedFeatures out{x, hops};
  for (int h = 0; h < hops; ++h) out.values = s.matrix() * out.values;
  return out;
}

inline PropagatedFeatures propagate_features(const NormalizedAdjacency& s, const FeatureMatrix& x,
                                             int hops) {
  return propagate_features(s, x.dense(), hops);
}

/// Scales each row to unit L1 norm; all-zero rows are left alone.
inline FeatureMatrix row_normalize_l1(const FeatureMatrix& x) {
  SparseMatrix m = x.sparse();
  for (Eigen::Index r = 0; r < m.outerSize(); ++r) {
    double total = 0.0;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) total += std::abs(it.value());
    if (total == 0.0) continue;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) it.valueRef() /= total;
  }
  return FeatureMatrix(std::move(m));
}

/// Connected-component id per node; components are numbered in order of their
/// smallest node index.
inline std::vector<NodeId> connected_components(const Graph& g, NodeId* count = nullptr) {
  const auto n = static_cast<std::size_t>(g.node_count());
  std::vector<NodeId> comp(n, -1);
  NodeId next = 0;
  std::vector<NodeId> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    comp[start] = next;
    stack.assign(1, static_cast<NodeId>(start));
    while (!stack.empty()) {
      NodeId u = stack.back();
      stack.pop_back();
      for (NodeId v : g.neighbors(u)) {
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

/// Induced subgraph on `keep` (any order; output follows ascending original index).
inline Subgraph induced_subgraph(const Graph& g, const FeatureMatrix& x, std::vector<NodeId> keep) {
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  detail::require(!keep.empty(), "induced subgraph needs at least one node");
  std::vector<NodeId> remap(static_cast<std::size_t>(g.node_count()), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    detail::require(keep[i] >= 0 && keep[i] < g.node_count(), "subgraph node out of range");
    remap[static_cast<std::size_t>(keep[i])] = static_cast<NodeId>(i);
  }
  std::vector<Edge> edges;
  for (const auto& e : g.edges()) {
    NodeId a = remap[static_cast<std::size_t>(e.u)];
    NodeId b = remap[static_cast<std::size_t>(e.v)];
    if (a >= 0 && b >= 0) edges.push_back({a, b, e.weight});
  }
  std::vector<ClassId> labels;
  if (g.has_labels()) {
    labels.reserve(keep.size());
    for (NodeId i : keep) labels.push_back(g.labels()[static_cast<std::size_t>(i)]);
  }
  std::vector<Eigen::Triplet<double>> triplets;
  const auto& xs = x.sparse();
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (SparseMatrix::InnerIterator it(xs, keep[i]); it; ++it)
      triplets.emplace_back(static_cast<Eigen::Index>(i), it.col(), it.value());
  SparseMatrix sub(static_cast<Eigen::Index>(keep.size()), x.cols());
  sub.setFromTriplets(triplets.begin(), triplets.end());
  return Subgraph{Graph(static_cast<NodeId>(keep.size()), g.class_count(), std::move(edges),
                        std::move(labels)),
                  FeatureMatrix(std::move(sub)), std::move(keep)};
}

/// Largest connected component; ties go to the component holding the smallest
/// original node index.
inline Subgraph largest_connected_component(const Graph& g, const FeatureMatrix& x) {
  if (x.rows() != g.node_count()) throw InvalidArgument("feature rows do not match node count");
  NodeId count = 0;
  auto comp = connected_components(g, &count);
  std::vector<std::size_t> size(static_cast<std::size_t>(count), 0);
  for (NodeId c : comp) ++size[static_cast<std::size_t>(c)];
  NodeId best = 0;
  for (NodeId c = 1; c < count; ++c)
    if (size[static_cast<std::size_t>(c)] > size[static_cast<std::size_t>(best)]) best = c;
  std::vector<NodeId> keep;
  for (std::size_t i = 0; i < comp.size(); ++i)
    if (comp[i] == best) keep.push_back(static_cast<NodeId>(i));
  return induced_subgraph(g, x, std::move(keep));
}

}  // namespace graphal
