#pragma once

// Preemptive query selection: while the oracle labels the pending query, the
// next query is chosen against the label set augmented with the pending
// node's predicted (modal) class. Also provides the stability bounds on the
// resulting risk error for binary and one-vs-all logistic regression.

#include "graphal/geem.hpp"

namespace graphal {

struct PreemptiveContext {
  NodeId pending = -1;
  ClassId predicted = 0;
  RowVector distribution;  // p(y_pending | Y_{L_{t-1}})
};

/// Predicts the pending query's label with the model fitted on `previous`.
inline PreemptiveContext make_preemptive_context(const Matrix& features, const LabelState& previous,
                                                 NodeId pending, const SolverConfig& cfg) {
  detail::require(previous.is_unlabelled(pending), "pending query must be unlabelled");
  PreemptiveContext ctx;
  ctx.pending = pending;
  if (previous.empty()) {
    ctx.distribution = RowVector::Constant(previous.class_count(), 1.0 / previous.class_count());
  } else {
    auto w = fit(features, previous, cfg);
    ctx.distribution = predict_proba(w, features.row(pending));
  }
  ctx.predicted = argmax(ctx.distribution);
  return ctx;
}

/// Y'_{L_t}: the previous labels plus the predicted label of the pending query.
inline LabelState augmented_labels(const LabelState& previous, const PreemptiveContext& ctx) {
  return previous.with(ctx.pending, ctx.predicted);
}

/// PreGEEM query step. `previous` is L_{t-1} (without the pending node).
inline RiskReport select_query_preemptive(const PreemptiveContext& ctx, const LabelState& previous,
                                          const Matrix& features, const SolverConfig& cfg,
                                          std::span<const NodeId> pool, const SelectOptions& opt,
                                          Rng& rng) {
  for (NodeId q : pool)
    detail::require(q != ctx.pending, "pool must not contain the pending query");
  return select_query(features, augmented_labels(previous, ctx), cfg, pool, opt, rng);
}

/// η_q = (‖x̃_q‖ + ‖x̃_prev‖) / (2λ).
inline double logistic_stability_eta(const RowVector& xq, const RowVector& xprev, double lambda) {
  detail::require(lambda > 0, "lambda must be positive");
  return (xq.norm() + xprev.norm()) / (2.0 * lambda);
}

inline double logistic_stability_eta(NodeId q, NodeId prev, double lambda, const Matrix& features) {
  return logistic_stability_eta(features.row(q), features.row(prev), lambda);
}

struct BoundReport {
  double eta = 0.0;
  std::vector<double> terms;  // one per node of E \ {q}
  double bound = 0.0;
  std::size_t vacuous_count = 0;
  std::optional<double> realized;
  bool multiclass = false;

  bool vacuous() const { return vacuous_count > 0; }
};

inline nlohmann::json to_json(const BoundReport& b) {
  nlohmann::json j{{"eta", b.eta},
                   {"bound", b.bound},
                   {"vacuous_count", b.vacuous_count},
                   {"multiclass", b.multiclass}};
  j["realized"] = b.realized ? nlohmann::json(*b.realized) : nlohmann::json(nullptr);
  return j;
}

namespace detail {

/// max(|b_{+η}|, |b_{-η}|) with b_{±η}(w, i) = σ(a) − σ(a ± 2η‖x̃_i‖), a = wᵀx̃_i.
inline double logistic_deviation(double a, double eta, double xnorm) {
  const double s = sigmoid(a);
  const double t = 2.0 * eta * xnorm;
  return std::max(std::abs(s - sigmoid(a + t)), std::abs(s - sigmoid(a - t)));
}

inline std::vector<NodeId> without(const std::vector<NodeId>& nodes, NodeId q) {
  std::vector<NodeId> out;
  out.reserve(nodes.size());
  for (NodeId i : nodes)
    if (i != q) out.push_back(i);
  return out;
}

inline SolverConfig as_one_vs_all(SolverConfig cfg) {
  cfg.mode = LinkMode::OneVsAll;
  cfg.warm_start.reset();
  return cfg;
}

}  // namespace detail

/// Stability bound on |R_Y − R_Y'| for binary L2 logistic regression.
/// Always evaluated with the binary logistic model (the one-vs-all link with
/// K = 2), whatever `cfg.mode` says, because the bound is stated for it.
inline BoundReport binary_risk_bound(NodeId q, const PreemptiveContext& ctx,
                                     const LabelState& previous, const Matrix& features,
                                     const SolverConfig& cfg, const std::vector<NodeId>& eval) {
  if (previous.class_count() != 2) throw InvalidArgument("binary bound requires exactly 2 classes");
  const SolverConfig bcfg = detail::as_one_vs_all(cfg);
  const LabelState aug = augmented_labels(previous, ctx);
  const auto nodes = detail::without(eval, q);
  if (nodes.empty()) throw InvalidArgument("risk evaluation set is empty once the candidate is removed");

  BoundReport rep;
  rep.eta = logistic_stability_eta(q, ctx.pending, cfg.lambda, features);
  rep.terms.assign(nodes.size(), 0.0);
  for (ClassId k = 0; k < 2; ++k) {
    const auto w = fit(features, aug.with(q, k), bcfg);
    const Vector w1 = w.w.col(1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto xi = features.row(nodes[i]);
      rep.terms[i] = std::max(rep.terms[i], detail::logistic_deviation(xi.dot(w1), rep.eta, xi.norm()));
    }
  }
  double total = 0.0;
  for (double t : rep.terms) total += t;
  rep.bound = total / static_cast<double>(nodes.size());
  return rep;
}

/// Bound on |R_Y − R_Y'| for one-vs-all logistic regression normalized by
/// C_i(w) = Σ_k σ(w^(k)ᵀx̃_i). Nodes where C_i − 4ρ ≤ 0 are clamped to 1 and
/// counted as vacuous; other terms are capped at 1 as well.
inline BoundReport multiclass_risk_bound(NodeId q, const PreemptiveContext& ctx,
                                         const LabelState& previous, const Matrix& features,
                                         const SolverConfig& cfg, const std::vector<NodeId>& eval) {
  if (cfg.mode != LinkMode::OneVsAll)
    throw InvalidArgument("multiclass bound requires the one-vs-all classifier mode");
  const int kc = previous.class_count();
  const LabelState aug = augmented_labels(previous, ctx);
  const auto nodes = detail::without(eval, q);
  if (nodes.empty()) throw InvalidArgument("risk evaluation set is empty once the candidate is removed");

  BoundReport rep;
  rep.multiclass = true;
  rep.eta = logistic_stability_eta(q, ctx.pending, cfg.lambda, features);
  rep.terms.assign(nodes.size(), 0.0);
  std::vector<char> vacuous(nodes.size(), 0);
  const SolverConfig ocfg = detail::as_one_vs_all(cfg);
  for (ClassId k = 0; k < kc; ++k) {
    const auto w = fit(features, aug.with(q, k), ocfg);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const RowVector xi = features.row(nodes[i]);
      const RowVector a = xi * w.w;
      const double xnorm = xi.norm();
      double c = 0.0, rho = 0.0;
      for (int kk = 0; kk < kc; ++kk) {
        c += sigmoid(a(kk));
        rho = std::max(rho, detail::logistic_deviation(a(kk), rep.eta, xnorm));
      }
      if (c - 4.0 * rho <= 0.0) {
        vacuous[i] = 1;
        continue;
      }
      for (int kk = 0; kk < kc; ++kk) {
        const double s = sigmoid(a(kk));
        const double p = s / c;
        const double lo = (s - rho) / (c + 4.0 * rho);
        const double hi = (s + rho) / (c - 4.0 * rho);
        rep.terms[i] = std::min(1.0, std::max({rep.terms[i], std::abs(p - lo), std::abs(p - hi)}));
      }
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (vacuous[i]) {
      rep.terms[i] = 1.0;
      ++rep.vacuous_count;
    }
    total += rep.terms[i];
  }
  rep.bound = total / static_cast<double>(nodes.size());
  return rep;
}

/// |R^{+q}_Y − R^{+q}_{Y'}| where Y carries the true label of the pending
/// node and Y' its prediction, both evaluated on the same subset.
inline double realized_risk_error(NodeId q, const PreemptiveContext& ctx, ClassId true_label,
                                  const LabelState& previous, const Matrix& features,
                                  const SolverConfig& cfg, const std::vector<NodeId>& eval) {
  const SgcRiskModel truth(features, previous.with(ctx.pending, true_label), cfg, eval, false);
  const SgcRiskModel guess(features, augmented_labels(previous, ctx), cfg, eval, false);
  return std::abs(truth.risk(q) - guess.risk(q));
}

/// Bound appropriate to the class count, with the realized error filled in.
inline BoundReport risk_bound_with_realized(NodeId q, const PreemptiveContext& ctx, ClassId true_label,
                                            const LabelState& previous, const Matrix& features,
                                            const SolverConfig& cfg, const std::vector<NodeId>& eval) {
  const SolverConfig ocfg = detail::as_one_vs_all(cfg);
  BoundReport rep = previous.class_count() == 2
                        ? binary_risk_bound(q, ctx, previous, features, ocfg, eval)
                        : multiclass_risk_bound(q, ctx, previous, features, ocfg, eval);
  rep.realized = realized_risk_error(q, ctx, true_label, previous, features, ocfg, eval);
  return rep;
}

}  // namespace graphal
