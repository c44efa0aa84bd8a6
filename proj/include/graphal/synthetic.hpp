#pragma once

// Planted-partition graphs with topic-style sparse features, for tests and
// smoke runs when the citation datasets are not at hand.

#include "graphal/dataset.hpp"

#include <random>

namespace graphal {

struct SyntheticSpec {
  NodeId nodes = 60;
  int classes = 3;
  Eigen::Index features = 30;
  double p_in = 0.15;
  double p_out = 0.01;
  int words_per_node = 6;
  double topic_signal = 0.6;  // probability a word is drawn from the node's class block
  std::uint64_t seed = 0;
};

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "nodes") s.nodes = value.get<NodeId>();
    else if (key == "classes") s.classes = value.get<int>();
    else if (key == "features") s.features = value.get<Eigen::Index>();
    else if (key == "p_in") s.p_in = value.get<double>();
    else if (key == "p_out") s.p_out = value.get<double>();
    else if (key == "words_per_node") s.words_per_node = value.get<int>();
    else if (key == "topic_signal") s.topic_signal = value.get<double>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else throw ConfigError("unknown synthetic dataset key '" + key + "'");
  }
  if (s.nodes < 1 || s.classes < 1 || s.features < s.classes || s.words_per_node < 1)
    throw ConfigError("synthetic dataset sizes are inconsistent");
  for (double p : {s.p_in, s.p_out, s.topic_signal})
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synthetic probabilities must lie in [0, 1]");
  return s;
}

inline nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"nodes", s.nodes},          {"classes", s.classes}, {"features", s.features},
          {"p_in", s.p_in},            {"p_out", s.p_out},     {"words_per_node", s.words_per_node},
          {"topic_signal", s.topic_signal}, {"seed", s.seed}};
}

inline Dataset make_synthetic(const SyntheticSpec& s) {
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ClassId> labels(static_cast<std::size_t>(s.nodes));
  for (NodeId i = 0; i < s.nodes; ++i) labels[static_cast<std::size_t>(i)] = static_cast<ClassId>(i % s.classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<Edge> edges;
  for (NodeId u = 0; u < s.nodes; ++u)
    for (NodeId v = u + 1; v < s.nodes; ++v) {
      const bool same = labels[static_cast<std::size_t>(u)] == labels[static_cast<std::size_t>(v)];
      if (unit(rng) < (same ? s.p_in : s.p_out)) edges.push_back({u, v, 1.0});
    }

  const Eigen::Index block = s.features / s.classes;
  std::uniform_int_distribution<Eigen::Index> any(0, s.features - 1);
  std::uniform_int_distribution<Eigen::Index> in_block(0, block - 1);
  std::vector<Eigen::Triplet<double>> trip;
  for (NodeId i = 0; i < s.nodes; ++i) {
    const ClassId y = labels[static_cast<std::size_t>(i)];
    for (int w = 0; w < s.words_per_node; ++w) {
      const Eigen::Index col = unit(rng) < s.topic_signal ? y * block + in_block(rng) : any(rng);
      trip.emplace_back(i, col, 1.0);
    }
  }
  SparseMatrix x(s.nodes, s.features);
  x.setFromTriplets(trip.begin(), trip.end(), [](double a, double b) { return a + b; });
  return Dataset{"synthetic", Graph(s.nodes, s.classes, std::move(edges), std::move(labels)),
                 FeatureMatrix(std::move(x))};
}

}  // namespace graphal
