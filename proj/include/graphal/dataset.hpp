#pragma once

#include "graphal/graph.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace graphal {

/// A loaded dataset container: topology, raw features and ground truth.
struct Dataset {
  std::string name;
  Graph graph;
  FeatureMatrix features;
};

namespace detail {

inline std::int64_t json_int(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    throw DatasetError(std::string("missing or non-integer field '") + key + "'");
  return j.at(key).get<std::int64_t>();
}

inline FeatureMatrix parse_features(const nlohmann::json& f, std::int64_t n, std::int64_t d) {
  if (f.is_array()) {
    if (static_cast<std::int64_t>(f.size()) != n)
      throw DatasetError("dense features have " + std::to_string(f.size()) + " rows, expected " +
                         std::to_string(n));
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& row = f[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<std::int64_t>(row.size()) != d)
        throw DatasetError("feature row " + std::to_string(i) + " does not have d entries");
      for (std::int64_t c = 0; c < d; ++c) {
        double v = row[static_cast<std::size_t>(c)].get<double>();
        if (v != 0.0) triplets.emplace_back(i, c, v);
      }
    }
    SparseMatrix m(n, d);
    m.setFromTriplets(triplets.begin(), triplets.end());
    return FeatureMatrix(std::move(m));
  }
  if (!f.is_object()) throw DatasetError("features must be a dense array or a CSR object");
  auto indptr = f.at("indptr").get<std::vector<std::int64_t>>();
  auto indices = f.at("indices").get<std::vector<std::int64_t>>();
  auto data = f.at("data").get<std::vector<double>>();
  if (static_cast<std::int64_t>(indptr.size()) != n + 1)
    throw DatasetError("CSR indptr must have n + 1 entries");
  if (indices.size() != data.size() || indptr.back() != static_cast<std::int64_t>(data.size()) ||
      indptr.front() != 0)
    throw DatasetError("CSR arrays are inconsistent");
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(data.size());
  for (std::int64_t i = 0; i < n; ++i) {
    if (indptr[static_cast<std::size_t>(i + 1)] < indptr[static_cast<std::size_t>(i)])
      throw DatasetError("CSR indptr must be non-decreasing");
    for (auto k = indptr[static_cast<std::size_t>(i)]; k < indptr[static_cast<std::size_t>(i + 1)];
         ++k) {
      auto c = indices[static_cast<std::size_t>(k)];
      if (c < 0 || c >= d) throw DatasetError("CSR column index out of range");
      triplets.emplace_back(i, c, data[static_cast<std::size_t>(k)]);
    }
  }
  SparseMatrix m(n, d);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return FeatureMatrix(std::move(m));
}

}  // namespace detail

/// Parses the JSON dataset container
/// {"n","d","k","edges":[[u,v(,w)]...],"features":dense|CSR,"labels":[...],"name"}.
inline Dataset parse_dataset(const nlohmann::json& j) {
  if (!j.is_object()) throw DatasetError("dataset container must be a JSON object");
  const auto n = detail::json_int(j, "n");
  const auto d = detail::json_int(j, "d");
  const auto k = detail::json_int(j, "k");
  if (n <= 0 || d <= 0 || k <= 0) throw DatasetError("n, d and k must be positive");
  if (!j.contains("edges") || !j.at("edges").is_array()) throw DatasetError("missing 'edges'");

  std::vector<Edge> edges;
  edges.reserve(j.at("edges").size());
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() < 2 || e.size() > 3)
      throw DatasetError("edges must be [u, v] or [u, v, weight]");
    Edge edge{e[0].get<NodeId>(), e[1].get<NodeId>(), e.size() == 3 ? e[2].get<double>() : 1.0};
    edges.push_back(edge);
  }
  std::vector<ClassId> labels;
  if (j.contains("labels") && !j.at("labels").is_null()) {
    labels = j.at("labels").get<std::vector<ClassId>>();
    if (static_cast<std::int64_t>(labels.size()) != n)
      throw DatasetError("labels has " + std::to_string(labels.size()) + " entries, expected " +
                         std::to_string(n));
  }
  if (!j.contains("features")) throw DatasetError("missing 'features'");
  auto features = detail::parse_features(j.at("features"), n, d);
  std::string name = j.value("name", std::string("unnamed"));
  return Dataset{std::move(name), Graph(n, static_cast<int>(k), std::move(edges), std::move(labels)),
                 std::move(features)};
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("dataset '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    return parse_dataset(j);
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("dataset '" + path + "': " + e.what());
  }
}

/// Serializes to the container format (features as CSR).
inline nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json j;
  j["name"] = ds.name;
  j["n"] = ds.graph.node_count();
  j["d"] = ds.features.cols();
  j["k"] = ds.graph.class_count();
  auto edges = nlohmann::json::array();
  for (const auto& e : ds.graph.edges()) {
    if (e.weight == 1.0)
      edges.push_back({e.u, e.v});
    else
      edges.push_back({e.u, e.v, e.weight});
  }
  j["edges"] = std::move(edges);
  const auto& x = ds.features.sparse();
  std::vector<std::int64_t> indptr{0}, indices;
  std::vector<double> data;
  for (Eigen::Index r = 0; r < x.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(x, r); it; ++it) {
      indices.push_back(it.col());
      data.push_back(it.value());
    }
    indptr.push_back(static_cast<std::int64_t>(data.size()));
  }
  j["features"] = {{"indptr", indptr}, {"indices", indices}, {"data", data}};
  if (ds.graph.has_labels())
    j["labels"] = ds.graph.labels();
  else
    j["labels"] = nullptr;
  return j;
}

struct PrepareOptions {
  bool largest_component = true;
  bool row_normalize = true;
  int hops = 2;
};

/// Everything the engine needs about one graph, ready for selection.
struct WorkingGraph {
  std::string name;
  Graph graph;
  FeatureMatrix features;  // after optional row normalization
  NormalizedAdjacency adjacency{SparseMatrix()};
  PropagatedFeatures propagated;
  std::vector<NodeId> original_index;  // node i came from original_index[i]
  PrepareOptions options;
};

inline WorkingGraph prepare(const Dataset& ds, const PrepareOptions& opt = {}) {
  Subgraph sub;
  if (opt.largest_component) {
    sub = largest_connected_component(ds.graph, ds.features);
  } else {
    std::vector<NodeId> all(static_cast<std::size_t>(ds.graph.node_count()));
    std::iota(all.begin(), all.end(), NodeId{0});
    sub = Subgraph{ds.graph, ds.features, std::move(all)};
  }
  FeatureMatrix x = opt.row_normalize ? row_normalize_l1(sub.features) : sub.features;
  auto s = normalize_adjacency(sub.graph);
  auto xt = propagate_features(s, x, opt.hops);
  return WorkingGraph{ds.name,       std::move(sub.graph), std::move(x), std::move(s),
                      std::move(xt), std::move(sub.original_index), opt};
}

}  // namespace graphal
