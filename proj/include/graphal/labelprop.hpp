#pragma once

// Gaussian-random-field label propagation and the model-averaged selector.
//
// The harmonic system over the unlabelled block is
//   (L_uu + εI) F = W_ul Y_L + (ε/K)·1
// i.e. the ε ridge pulls toward the uniform distribution rather than toward
// zero. Because (L_uu + εI)·1 = W_ul·1 + ε·1, every row of F sums to one and a
// component without labels resolves to exactly uniform. With ε = 0 those
// label-free components are pinned to uniform explicitly.

#include "graphal/geem.hpp"
#include "graphal/graph.hpp"

#include <Eigen/SparseCholesky>

namespace graphal {

inline constexpr double kDefaultEpsilon = 1e-6;

namespace detail {

inline void normalize_distribution(Eigen::Ref<RowVector> row) {
  row = row.cwiseMax(0.0);
  const double s = row.sum();
  if (s > 0.0 && std::isfinite(s))
    row /= s;
  else
    row.setConstant(1.0 / static_cast<double>(row.size()));
}

}  // namespace detail

/// Factorized harmonic system for one labelled set.
class HarmonicSystem {
 public:
  HarmonicSystem(const Graph& g, const LabelState& state, double epsilon = kDefaultEpsilon)
      : epsilon_(epsilon), k_(state.class_count()) {
    detail::require(epsilon >= 0.0 && std::isfinite(epsilon), "epsilon must be finite and >= 0");
    detail::require(state.node_count() == g.node_count(), "label state and graph differ in size");
    detail::require(!state.empty(), "label propagation needs at least one label");
    const NodeId n = g.node_count();
    position_.assign(static_cast<std::size_t>(n), -1);
    std::vector<ClassId> label_of(static_cast<std::size_t>(n), -1);
    for (std::size_t t = 0; t < state.size(); ++t)
      label_of[static_cast<std::size_t>(state.labelled()[t])] = state.labels()[t];
    for (NodeId i = 0; i < n; ++i)
      if (label_of[static_cast<std::size_t>(i)] < 0) {
        position_[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(unlabelled_.size());
        unlabelled_.push_back(i);
      }
    const auto nu = static_cast<Eigen::Index>(unlabelled_.size());

    std::vector<char> pinned(unlabelled_.size(), 0);
    if (epsilon_ == 0.0) pinned = label_free(g, label_of);

    std::vector<Eigen::Triplet<double>> trip;
    rhs_ = Matrix::Zero(nu, k_);
    for (Eigen::Index a = 0; a < nu; ++a) {
      const NodeId i = unlabelled_[static_cast<std::size_t>(a)];
      if (pinned[static_cast<std::size_t>(a)]) {
        trip.emplace_back(a, a, 1.0);
        rhs_.row(a).setConstant(1.0 / k_);
        continue;
      }
      double degree = 0.0;
      const auto nb = g.neighbors(i);
      const auto wt = g.neighbor_weights(i);
      for (std::size_t e = 0; e < nb.size(); ++e) {
        degree += wt[e];
        const ClassId y = label_of[static_cast<std::size_t>(nb[e])];
        if (y >= 0)
          rhs_(a, y) += wt[e];
        else
          trip.emplace_back(a, position_[static_cast<std::size_t>(nb[e])], -wt[e]);
      }
      trip.emplace_back(a, a, degree + epsilon_);
      if (epsilon_ > 0.0) rhs_.row(a).array() += epsilon_ / k_;
    }
    Eigen::SparseMatrix<double> a(nu, nu);
    a.setFromTriplets(trip.begin(), trip.end());
    if (nu > 0) {
      solver_.compute(a);
      if (solver_.info() != Eigen::Success) throw Error("harmonic system factorization failed");
      raw_ = solver_.solve(rhs_);
    } else {
      raw_ = Matrix(0, k_);
    }
  }

  double epsilon() const { return epsilon_; }
  int class_count() const { return k_; }
  const std::vector<NodeId>& unlabelled() const { return unlabelled_; }

  /// Row of node i in the unlabelled block, or -1 if i is labelled.
  Eigen::Index position(NodeId i) const { return position_.at(static_cast<std::size_t>(i)); }

  /// Unclipped harmonic solution (|U| × K).
  const Matrix& raw() const { return raw_; }

  /// Column of (L_uu + εI)^-1 for unlabelled node q.
  Vector green_column(NodeId q) const {
    const Eigen::Index p = position(q);
    detail::require(p >= 0, "node " + std::to_string(q) + " is labelled");
    Vector e = Vector::Zero(static_cast<Eigen::Index>(unlabelled_.size()));
    e(p) = 1.0;
    return solver_.solve(e);
  }

 private:
  // Unlabelled nodes whose component (within U) has no labelled neighbour.
  std::vector<char> label_free(const Graph& g, const std::vector<ClassId>& label_of) const {
    std::vector<char> touched(unlabelled_.size(), 0), seen(unlabelled_.size(), 0);
    std::vector<char> pinned(unlabelled_.size(), 0);
    std::vector<Eigen::Index> comp, stack;
    for (std::size_t s = 0; s < unlabelled_.size(); ++s) {
      if (seen[s]) continue;
      comp.clear();
      stack.assign(1, static_cast<Eigen::Index>(s));
      seen[s] = 1;
      bool has_label = false;
      while (!stack.empty()) {
        const auto a = stack.back();
        stack.pop_back();
        comp.push_back(a);
        for (NodeId j : g.neighbors(unlabelled_[static_cast<std::size_t>(a)])) {
          if (label_of[static_cast<std::size_t>(j)] >= 0) {
            has_label = true;
            continue;
          }
          const auto b = position_[static_cast<std::size_t>(j)];
          if (!seen[static_cast<std::size_t>(b)]) {
            seen[static_cast<std::size_t>(b)] = 1;
            stack.push_back(b);
          }
        }
      }
      if (!has_label)
        for (auto a : comp) pinned[static_cast<std::size_t>(a)] = 1;
    }
    return pinned;
  }

  double epsilon_;
  int k_;
  std::vector<NodeId> unlabelled_;
  std::vector<Eigen::Index> position_;
  Matrix rhs_, raw_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

/// Class distributions for every node (n × K): harmonic rows clipped at zero
/// and renormalized for unlabelled nodes, one-hot rows for labelled nodes.
inline Matrix harmonic_predict(const Graph& g, const LabelState& state,
                               double epsilon = kDefaultEpsilon) {
  const HarmonicSystem sys(g, state, epsilon);
  Matrix out = Matrix::Zero(g.node_count(), state.class_count());
  for (std::size_t t = 0; t < state.size(); ++t) out(state.labelled()[t], state.labels()[t]) = 1.0;
  const auto& u = sys.unlabelled();
  for (std::size_t a = 0; a < u.size(); ++a) {
    RowVector r = sys.raw().row(static_cast<Eigen::Index>(a));
    detail::normalize_distribution(r);
    out.row(u[a]) = r;
  }
  return out;
}

/// Chain-rule log evidence Σ_t log p(y_{l_t} | y_{l_1..t-1}) in insertion
/// order; the first factor is the uniform prior 1/K.
inline double lp_evidence(const Graph& g, const LabelState& state, double epsilon = kDefaultEpsilon) {
  if (state.empty()) return 0.0;
  double total = -std::log(static_cast<double>(state.class_count()));
  for (std::size_t t = 1; t < state.size(); ++t) {
    const LabelState earlier = state.prefix(t);
    const HarmonicSystem sys(g, earlier, epsilon);
    const NodeId node = state.labelled()[t];
    RowVector r = sys.raw().row(sys.position(node));
    detail::normalize_distribution(r);
    total += std::log(std::max(r(state.labels()[t]), 1e-300));
  }
  return total;
}

/// Expected zero-one risk of querying candidates under the harmonic model.
class LpRiskModel {
 public:
  LpRiskModel(const Graph& g, LabelState state, std::vector<NodeId> eval_nodes,
              double epsilon = kDefaultEpsilon)
      : g_(g), state_(std::move(state)), eval_(std::move(eval_nodes)), sys_(g, state_, epsilon) {
    std::sort(eval_.begin(), eval_.end());
    for (NodeId i : eval_)
      detail::require(sys_.position(i) >= 0, "evaluation node " + std::to_string(i) + " is labelled");
  }

  const std::vector<NodeId>& eval_nodes() const { return eval_; }

  RowVector query_distribution(NodeId q) const {
    const auto p = sys_.position(q);
    detail::require(p >= 0, "node " + std::to_string(q) + " is labelled");
    RowVector r = sys_.raw().row(p);
    detail::normalize_distribution(r);
    return r;
  }

  /// Class distributions on E \ {q} after clamping y_q = k.
  Matrix retrained_probabilities(NodeId q, ClassId k) const {
    const auto rows = eval_without(q);
    Matrix out(static_cast<Eigen::Index>(rows.size()), sys_.class_count());
    if (sys_.epsilon() == 0.0) {
      const Matrix full = harmonic_predict(g_, state_.with(q, k), 0.0);
      for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = full.row(rows[i]);
      return out;
    }
    // Clamping q is a rank-one change: F' = F + g (e_k - F_q) / g_qq.
    const Vector gcol = sys_.green_column(q);
    const auto pq = sys_.position(q);
    RowVector shift = -sys_.raw().row(pq);
    shift(k) += 1.0;
    shift /= gcol(pq);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto p = sys_.position(rows[i]);
      RowVector r = sys_.raw().row(p) + gcol(p) * shift;
      detail::normalize_distribution(r);
      out.row(static_cast<Eigen::Index>(i)) = r;
    }
    return out;
  }

  double risk(NodeId q) const {
    detail::require(state_.is_unlabelled(q), "candidate " + std::to_string(q) + " is not unlabelled");
    const auto rows = eval_without(q);
    if (rows.empty()) throw InvalidArgument("risk evaluation set is empty once the candidate is removed");
    const RowVector pq = query_distribution(q);
    double total = 0.0;
    for (ClassId k = 0; k < sys_.class_count(); ++k) {
      if (pq(k) == 0.0) continue;
      const Matrix probs = retrained_probabilities(q, k);
      for (Eigen::Index i = 0; i < probs.rows(); ++i) total += (1.0 - probs.row(i).maxCoeff()) * pq(k);
    }
    return total / static_cast<double>(rows.size());
  }

 private:
  std::vector<NodeId> eval_without(NodeId q) const {
    std::vector<NodeId> out;
    out.reserve(eval_.size());
    for (NodeId i : eval_)
      if (i != q) out.push_back(i);
    return out;
  }

  const Graph& g_;
  LabelState state_;
  std::vector<NodeId> eval_;
  HarmonicSystem sys_;
};

inline double lp_expected_risk(NodeId q, const LabelState& state, const Graph& g,
                               std::vector<NodeId> eval_subset, double epsilon = kDefaultEpsilon) {
  return LpRiskModel(g, state, std::move(eval_subset), epsilon).risk(q);
}

/// Normalized model weights (λ̄_LG, λ̄_LP) under equal priors.
struct ModelPosterior {
  double lg = 0.5;
  double lp = 0.5;
  double log_evidence_lg = 0.0;
  double log_evidence_lp = 0.0;
};

inline ModelPosterior model_posterior(double log_evidence_lg, double log_evidence_lp) {
  detail::require(!std::isnan(log_evidence_lg) && !std::isnan(log_evidence_lp),
                  "log evidence is NaN");
  ModelPosterior p;
  p.log_evidence_lg = log_evidence_lg;
  p.log_evidence_lp = log_evidence_lp;
  const double m = std::max(log_evidence_lg, log_evidence_lp);
  const double a = std::exp(log_evidence_lg - m);
  const double b = std::exp(log_evidence_lp - m);
  p.lg = a / (a + b);
  p.lp = b / (a + b);
  return p;
}

/// Evidences of both models on the current labels.
inline ModelPosterior model_posterior(const LabelState& state, const Matrix& features, const Graph& g,
                                      const SolverConfig& cfg, double epsilon = kDefaultEpsilon) {
  detail::require(!state.empty(), "model posterior needs at least one label");
  const Matrix rows = gather_rows(features, state.labelled());
  const auto w = fit(rows, state.labels(), state.class_count(), cfg);
  return model_posterior(log_evidence(w, rows, state.labels()), lp_evidence(g, state, epsilon));
}

/// Model-averaged class probabilities λ̄_LG·P_SGC + λ̄_LP·P_LP for every node.
inline Matrix combined_predict(const LabelState& state, const Matrix& features, const Graph& g,
                               const SolverConfig& cfg, const ModelPosterior& post,
                               double epsilon = kDefaultEpsilon) {
  Matrix out = Matrix::Zero(g.node_count(), state.class_count());
  if (post.lg > 0.0) out += post.lg * predict_proba(fit(features, state, cfg), features);
  if (post.lp > 0.0) out += post.lp * harmonic_predict(g, state, epsilon);
  return out;
}

/// Pure propagation-risk selection over `pool` with a given evaluation subset.
inline RiskReport lp_select_with_subset(const Graph& g, const LabelState& state,
                                        std::span<const NodeId> pool, std::vector<NodeId> eval,
                                        double epsilon = kDefaultEpsilon, const SelectOptions& opt = {}) {
  auto candidates = detail::checked_pool(state, pool);
  RiskReport r;
  if (candidates.size() == 1) {
    r = detail::rank_candidates(candidates, eval, opt.cancel, [](NodeId) { return 0.0; });
  } else {
    LpRiskModel model(g, state, eval, epsilon);
    r = detail::rank_candidates(std::move(candidates), model.eval_nodes(), opt.cancel,
                                [&](NodeId q) { return model.risk(q); });
  }
  r.model = "lp";
  return r;
}

inline RiskReport lp_select(const Graph& g, const LabelState& state, std::span<const NodeId> pool,
                            double epsilon, const SelectOptions& opt, Rng& rng) {
  auto candidates = detail::checked_pool(state, pool);
  auto eval = draw_eval_subset(state, opt.eval_subset_size, rng);
  if (opt.candidate_pool_size > 0)
    candidates = detail::sample_sorted(std::move(candidates), opt.candidate_pool_size, rng);
  return lp_select_with_subset(g, state, candidates, std::move(eval), epsilon, opt);
}

/// argmin_q λ̄_LG·R_LG(q) + λ̄_LP·R_LP(q) with one evaluation subset shared by
/// both models; a model with zero weight is not evaluated at all.
inline RiskReport combined_select_with_subset(const Matrix& features, const Graph& g,
                                              const LabelState& state, const SolverConfig& cfg,
                                              const ModelPosterior& post, std::span<const NodeId> pool,
                                              std::vector<NodeId> eval, double epsilon = kDefaultEpsilon,
                                              const SelectOptions& opt = {}) {
  auto candidates = detail::checked_pool(state, pool);
  RiskReport r;
  if (candidates.size() == 1) {
    r = detail::rank_candidates(candidates, eval, opt.cancel, [](NodeId) { return 0.0; });
  } else {
    std::sort(eval.begin(), eval.end());
    std::optional<SgcRiskModel> sgc;
    std::optional<LpRiskModel> lp;
    if (post.lg > 0.0) sgc.emplace(features, state, cfg, eval, opt.warm_start);
    if (post.lp > 0.0) lp.emplace(g, state, eval, epsilon);
    r = detail::rank_candidates(std::move(candidates), eval, opt.cancel, [&](NodeId q) {
      double total = 0.0;
      if (sgc) total += post.lg * sgc->risk(q);
      if (lp) total += post.lp * lp->risk(q);
      return total;
    });
  }
  r.model = "combined";
  r.model_weights = std::array<double, 2>{post.lg, post.lp};
  return r;
}

inline RiskReport combined_select(const Matrix& features, const Graph& g, const LabelState& state,
                                  const SolverConfig& cfg, std::span<const NodeId> pool, double epsilon,
                                  const SelectOptions& opt, Rng& rng,
                                  std::optional<ModelPosterior> posterior = std::nullopt) {
  auto candidates = detail::checked_pool(state, pool);
  auto eval = draw_eval_subset(state, opt.eval_subset_size, rng);
  if (opt.candidate_pool_size > 0)
    candidates = detail::sample_sorted(std::move(candidates), opt.candidate_pool_size, rng);
  const ModelPosterior post =
      posterior ? *posterior : model_posterior(state, features, g, cfg, epsilon);
  return combined_select_with_subset(features, g, state, cfg, post, candidates, std::move(eval), epsilon,
                                     opt);
}

}  // namespace graphal
