#pragma once

// Expected-error-minimization query selection with the SGC model.
//
// For a candidate q the risk is
//   R(q) = 1/|E \ {q}| · Σ_k p(y_q = k | Y_L) · Σ_{i ∈ E \ {q}} (1 − max_k' p(y_i = k' | Y_L, y_q = k))
// where E is the risk-evaluation subset of the unlabelled nodes and each
// p(· | Y_L, y_q = k) comes from refitting the regression with q added.

#include "graphal/classifier.hpp"
#include "graphal/parallel.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <random>

namespace graphal {

using Rng = std::mt19937_64;

struct CandidateRisk {
  NodeId node = -1;
  std::optional<double> risk;
  double seconds = 0.0;
};

struct RiskReport {
  std::string model = "sgc";
  std::vector<CandidateRisk> candidates;  // ascending node order
  NodeId selected = -1;
  std::optional<double> selected_risk;
  std::vector<NodeId> pool;
  std::vector<NodeId> eval_subset;
  std::optional<std::array<double, 2>> model_weights;  // (sgc, propagation) when averaged
};

inline nlohmann::json to_json(const RiskReport& r, bool include_timing = true) {
  nlohmann::json j;
  j["model"] = r.model;
  j["selected"] = r.selected;
  j["selected_risk"] = r.selected_risk ? nlohmann::json(*r.selected_risk) : nlohmann::json(nullptr);
  auto cands = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    nlohmann::json e{{"node", c.node},
                     {"risk", c.risk ? nlohmann::json(*c.risk) : nlohmann::json(nullptr)}};
    if (include_timing) e["seconds"] = c.seconds;
    cands.push_back(std::move(e));
  }
  j["candidates"] = std::move(cands);
  j["pool_size"] = r.pool.size();
  j["eval_subset"] = r.eval_subset;
  if (r.model_weights) j["model_weights"] = *r.model_weights;
  return j;
}

struct SelectOptions {
  std::size_t eval_subset_size = 500;
  std::size_t candidate_pool_size = 0;  // 0: every pool node is a candidate
  bool warm_start = true;
  const std::atomic<bool>* cancel = nullptr;
};

namespace detail {

inline void check_cancel(const std::atomic<bool>* cancel) {
  if (cancel && cancel->load(std::memory_order_relaxed)) throw Cancelled();
}

/// Uniform sample of `count` items without replacement, returned sorted.
inline std::vector<NodeId> sample_sorted(std::vector<NodeId> items, std::size_t count, Rng& rng) {
  if (items.size() <= count) return items;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(count);
  std::sort(items.begin(), items.end());
  return items;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Risk-evaluation subset: all of U_t when |U_t| ≤ size, else a uniform sample.
inline std::vector<NodeId> draw_eval_subset(const LabelState& state, std::size_t size, Rng& rng) {
  return detail::sample_sorted(state.unlabelled(), size, rng);
}

/// Precomputed state for evaluating SGC risks of many candidates against one
/// labelled set and one evaluation subset.
class SgcRiskModel {
 public:
  SgcRiskModel(const Matrix& features, LabelState state, SolverConfig cfg,
               std::vector<NodeId> eval_nodes, bool warm_start = true)
      : x_(features), state_(std::move(state)), cfg_(std::move(cfg)),
        eval_(std::move(eval_nodes)), warm_start_(warm_start) {
    cfg_.validate();
    if (state_.empty()) throw InvalidArgument("the SGC model needs at least one label");
    std::sort(eval_.begin(), eval_.end());
    const Matrix rows = gather_rows(x_, state_.labelled());
    base_ = fit(rows, state_.labels(), state_.class_count(), cfg_);
    x_eval_ = gather_rows(x_, eval_);
    reduced_ = x_.cols() > static_cast<Eigen::Index>(state_.size()) + 1;
    if (reduced_) {
      basis_ = detail::row_space_basis(rows);
      z_lab_ = rows * basis_;
      z_eval_ = x_eval_ * basis_;
      b_base_ = basis_.transpose() * base_.w;
    } else {
      z_lab_ = rows;
      z_eval_ = x_eval_;
      b_base_ = base_.w;
    }
    y_aug_ = state_.labels();
    y_aug_.push_back(0);
  }

  const RegressionWeights& base() const { return base_; }
  const LabelState& state() const { return state_; }
  const std::vector<NodeId>& eval_nodes() const { return eval_; }
  int class_count() const { return state_.class_count(); }

  /// p(y_q = · | Y_L) under the current model.
  RowVector query_distribution(NodeId q) const {
    RowVector r = x_.row(q) * base_.w;
    detail::link_row(r, base_.mode);
    return r;
  }

  /// Class probabilities on E \ {q} after refitting with y_q = k.
  Matrix retrained_probabilities(NodeId q, ClassId k) const {
    Candidate c = prepare(q);
    return solve_class(c, k);
  }

  double risk(NodeId q) const {
    detail::require(state_.is_unlabelled(q), "candidate " + std::to_string(q) + " is not unlabelled");
    Candidate c = prepare(q);
    if (c.eval_rows.rows() == 0)
      throw InvalidArgument("risk evaluation set is empty once the candidate is removed");
    const RowVector pq = query_distribution(q);
    double total = 0.0;
    for (ClassId k = 0; k < class_count(); ++k) {
      const Matrix probs = solve_class(c, k);
      for (Eigen::Index i = 0; i < probs.rows(); ++i) total += (1.0 - probs.row(i).maxCoeff()) * pq(k);
    }
    return total / static_cast<double>(c.eval_rows.rows());
  }

 private:
  struct Candidate {
    Matrix design;     // (m + 1) × p
    Matrix eval_rows;  // |E \ {q}| × p
    Matrix warm;       // p × K
  };

  Candidate prepare(NodeId q) const {
    Candidate c;
    const Eigen::Index m = static_cast<Eigen::Index>(state_.size());
    const auto pos = std::lower_bound(eval_.begin(), eval_.end(), q);
    const bool q_in_eval = pos != eval_.end() && *pos == q;
    const Eigen::Index skip = q_in_eval ? static_cast<Eigen::Index>(pos - eval_.begin()) : -1;
    const Eigen::Index e = static_cast<Eigen::Index>(eval_.size()) - (q_in_eval ? 1 : 0);

    Eigen::Index p = z_lab_.cols();
    Vector extra_eval;
    double rho = 0.0;
    RowVector zq;
    if (reduced_) {
      const Vector xq = x_.row(q).transpose();
      const Vector coords = basis_.transpose() * xq;
      const Vector resid = xq - basis_ * coords;
      rho = resid.norm();
      zq = coords.transpose();
      if (rho > 1e-10 * std::max(xq.norm(), 1e-300)) {
        extra_eval = x_eval_ * resid / rho;
        ++p;
      }
    } else {
      zq = x_.row(q);
    }
    const bool extended = p > z_lab_.cols();

    c.design = Matrix::Zero(m + 1, p);
    c.design.topLeftCorner(m, z_lab_.cols()) = z_lab_;
    c.design.block(m, 0, 1, zq.size()) = zq;
    if (extended) c.design(m, p - 1) = rho;

    c.eval_rows.resize(e, p);
    for (Eigen::Index i = 0, out = 0; i < static_cast<Eigen::Index>(eval_.size()); ++i) {
      if (i == skip) continue;
      c.eval_rows.block(out, 0, 1, z_eval_.cols()) = z_eval_.row(i);
      if (extended) c.eval_rows(out, p - 1) = extra_eval(i);
      ++out;
    }
    c.warm = Matrix::Zero(p, class_count());
    if (warm_start_) c.warm.topRows(b_base_.rows()) = b_base_;
    return c;
  }

  Matrix solve_class(const Candidate& c, ClassId k) const {
    std::vector<ClassId> y = y_aug_;
    y.back() = k;
    Matrix b = c.warm;
    detail::solve(cfg_.mode, c.design, y, class_count(), cfg_.lambda, cfg_.tol, cfg_.max_iter, b);
    return detail::link(c.eval_rows * b, cfg_.mode);
  }

  const Matrix& x_;
  LabelState state_;
  SolverConfig cfg_;
  std::vector<NodeId> eval_;
  bool warm_start_;
  RegressionWeights base_;
  Matrix x_eval_;
  bool reduced_ = false;
  Matrix basis_, z_lab_, z_eval_, b_base_;
  std::vector<ClassId> y_aug_;
};

/// Free-function form of a single risk evaluation.
inline double expected_risk(NodeId q, const LabelState& state, const Matrix& features,
                            const SolverConfig& cfg, std::vector<NodeId> eval_subset) {
  return SgcRiskModel(features, state, cfg, std::move(eval_subset)).risk(q);
}

namespace detail {

inline std::vector<NodeId> checked_pool(const LabelState& state, std::span<const NodeId> pool) {
  if (pool.empty()) throw InvalidArgument("candidate pool is empty");
  std::vector<NodeId> out(pool.begin(), pool.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (NodeId q : out)
    require(state.is_unlabelled(q), "pool node " + std::to_string(q) + " is not unlabelled");
  return out;
}

/// Evaluates `risk_of` on every candidate and picks the minimizer (smallest
/// node index on ties). Candidates whose evaluation set would be empty get no
/// risk; a single-candidate pool is returned without evaluation.
template <typename RiskFn>
RiskReport rank_candidates(std::vector<NodeId> pool, std::vector<NodeId> eval,
                           const std::atomic<bool>* cancel, RiskFn&& risk_of) {
  RiskReport report;
  report.pool = pool;
  report.eval_subset = std::move(eval);
  report.candidates.resize(pool.size());
  if (pool.size() == 1) {
    report.candidates[0].node = pool[0];
    report.selected = pool[0];
    return report;
  }
  parallel_for(pool.size(), [&](std::size_t i) {
    check_cancel(cancel);
    const auto t0 = std::chrono::steady_clock::now();
    auto& c = report.candidates[i];
    c.node = pool[i];
    const bool only_self = report.eval_subset.size() == 1 && report.eval_subset[0] == c.node;
    if (!report.eval_subset.empty() && !only_self) c.risk = risk_of(c.node);
    c.seconds = seconds_since(t0);
  });
  for (const auto& c : report.candidates) {
    if (!c.risk) continue;
    if (!report.selected_risk || *c.risk < *report.selected_risk) {
      report.selected_risk = c.risk;
      report.selected = c.node;
    }
  }
  if (report.selected < 0) report.selected = pool.front();
  return report;
}

}  // namespace detail

/// Risk-minimizing query over `pool` with an explicit evaluation subset.
inline RiskReport select_query_with_subset(const Matrix& features, const LabelState& state,
                                           const SolverConfig& cfg, std::span<const NodeId> pool,
                                           std::vector<NodeId> eval, const SelectOptions& opt = {}) {
  auto candidates = detail::checked_pool(state, pool);
  if (candidates.size() == 1) return detail::rank_candidates(candidates, eval, opt.cancel, [](NodeId) { return 0.0; });
  SgcRiskModel model(features, state, cfg, eval, opt.warm_start);
  return detail::rank_candidates(std::move(candidates), model.eval_nodes(), opt.cancel,
                                 [&](NodeId q) { return model.risk(q); });
}

/// GEEM query step: draws the evaluation subset from U_t, optionally
/// subsamples the candidate pool, and returns the risk minimizer.
inline RiskReport select_query(const Matrix& features, const LabelState& state,
                               const SolverConfig& cfg, std::span<const NodeId> pool,
                               const SelectOptions& opt, Rng& rng) {
  auto candidates = detail::checked_pool(state, pool);
  auto eval = draw_eval_subset(state, opt.eval_subset_size, rng);
  if (opt.candidate_pool_size > 0)
    candidates = detail::sample_sorted(std::move(candidates), opt.candidate_pool_size, rng);
  return select_query_with_subset(features, state, cfg, candidates, std::move(eval), opt);
}

}  // namespace graphal
