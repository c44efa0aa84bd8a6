#pragma once

// L2-regularized logistic regression on propagated node features, without an
// intercept: p(y | x̃) = link(x̃ W). Two links are supported:
//
//   softmax          J(W) = -Σ log softmax(x̃_i W)_{y_i} + λ‖W‖²_F
//   one-vs-all       J(W) = Σ_k Σ_i log(1 + exp(-s_ik x̃_i w_k)) + λ‖W‖²_F,
//                    p_k = σ(x̃ w_k) / Σ_k' σ(x̃ w_k')
//
// Every minimizer lies in the span of the training rows, so the solvers work
// in an orthonormal basis of that span (dimension ≤ number of labels) and map
// the result back. This is exact, and it is what keeps thousands of refits per
// query affordable.

#include "graphal/common.hpp"
#include "graphal/labels.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>

namespace graphal {

enum class LinkMode { Softmax, OneVsAll };

inline const char* to_string(LinkMode m) { return m == LinkMode::Softmax ? "softmax" : "one-vs-all"; }

inline LinkMode link_mode_from_string(const std::string& s) {
  if (s == "softmax") return LinkMode::Softmax;
  if (s == "one-vs-all" || s == "ova" || s == "one-vs-all-normalized") return LinkMode::OneVsAll;
  throw ConfigError("unknown classifier mode '" + s + "'");
}

struct SolverConfig {
  double lambda = 1.0;
  LinkMode mode = LinkMode::Softmax;
  double tol = 1e-6;  // on ‖∇J‖_F
  int max_iter = 100;
  std::optional<Matrix> warm_start;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
    if (!(tol > 0.0)) throw ConfigError("solver tolerance must be positive");
    if (max_iter <= 0) throw ConfigError("max_iter must be positive");
  }
};

struct ConvergenceReport {
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

struct RegressionWeights {
  Matrix w;  // d × K
  LinkMode mode = LinkMode::Softmax;
  double lambda = 1.0;
  ConvergenceReport report;

  int class_count() const { return static_cast<int>(w.cols()); }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-z)), stable for both signs.
inline double log1p_exp_neg(double z) {
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

namespace detail {

/// Turns a row of logits into class probabilities in place.
inline void link_row(Eigen::Ref<RowVector> row, LinkMode mode) {
  if (mode == LinkMode::Softmax) {
    const double m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  } else {
    for (Eigen::Index k = 0; k < row.size(); ++k) row(k) = sigmoid(row(k));
    row /= row.sum();
  }
}

inline Matrix link(Matrix logits, LinkMode mode) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    RowVector r = logits.row(i);
    link_row(r, mode);
    logits.row(i) = r;
  }
  return logits;
}

inline double frob_dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

/// Softmax problem over a (possibly reduced) design matrix.
class SoftmaxObjective {
 public:
  SoftmaxObjective(const Matrix& z, std::span<const ClassId> y, int k, double lambda)
      : z_(z), y_(y), k_(k), lambda_(lambda) {}

  double value(const Matrix& b) const {
    Matrix logits = z_ * b;
    double total = lambda_ * b.squaredNorm();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double m = logits.row(i).maxCoeff();
      const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
      total += lse - logits(i, y_[static_cast<std::size_t>(i)]);
    }
    return total;
  }

  /// Caches probabilities at b and returns the gradient.
  Matrix gradient(const Matrix& b) {
    probs_ = link(z_ * b, LinkMode::Softmax);
    Matrix resid = probs_;
    for (Eigen::Index i = 0; i < resid.rows(); ++i) resid(i, y_[static_cast<std::size_t>(i)]) -= 1.0;
    return z_.transpose() * resid + 2.0 * lambda_ * b;
  }

  /// Hessian-vector product at the point of the last gradient() call.
  Matrix hessian_times(const Matrix& v) const {
    Matrix a = z_ * v;
    Matrix h = probs_.cwiseProduct(a);
    Vector dots = h.rowwise().sum();
    h -= probs_.cwiseProduct(dots.replicate(1, k_));
    return z_.transpose() * h + 2.0 * lambda_ * v;
  }

 private:
  const Matrix& z_;
  std::span<const ClassId> y_;
  int k_;
  double lambda_;
  Matrix probs_;
};

inline bool armijo_ok(double f_new, double f_old, double step, double slope) {
  const double slack = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f_old));
  return f_new <= f_old + 1e-4 * step * slope + slack;
}

/// Damped Newton with truncated conjugate-gradient inner solves.
inline ConvergenceReport solve_softmax(const Matrix& z, std::span<const ClassId> y, int k,
                                       double lambda, double tol, int max_iter, Matrix& b) {
  SoftmaxObjective obj(z, y, k, lambda);
  ConvergenceReport rep;
  if (b.rows() != z.cols() || b.cols() != k) b = Matrix::Zero(z.cols(), k);
  double f = obj.value(b);
  for (rep.iterations = 0;; ++rep.iterations) {
    Matrix g = obj.gradient(b);
    rep.gradient_norm = g.norm();
    if (rep.gradient_norm <= tol) {
      rep.converged = true;
      return rep;
    }
    if (rep.iterations >= max_iter) return rep;

    // CG on H s = -g.
    Matrix s = Matrix::Zero(b.rows(), b.cols());
    Matrix r = -g;
    Matrix p = r;
    double rr = r.squaredNorm();
    const double forcing = std::min(0.5, std::sqrt(rep.gradient_norm)) * rep.gradient_norm;
    const auto cg_max = std::max<Eigen::Index>(10, 2 * b.size());
    for (Eigen::Index it = 0; it < cg_max && std::sqrt(rr) > forcing; ++it) {
      Matrix hp = obj.hessian_times(p);
      const double curv = frob_dot(p, hp);
      if (curv <= 0) break;
      const double alpha = rr / curv;
      s += alpha * p;
      r -= alpha * hp;
      const double rr_new = r.squaredNorm();
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
    if (s.squaredNorm() == 0.0) s = -g;

    const double slope = frob_dot(g, s);
    double step = 1.0;
    Matrix trial;
    double f_trial = 0.0;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      trial = b + step * s;
      f_trial = obj.value(trial);
      if (armijo_ok(f_trial, f, step, slope)) break;
    }
    b = std::move(trial);
    f = f_trial;
  }
}

/// One binary L2 logistic problem for each class column of b, solved by Newton
/// with exact Hessians. Stops each column at ‖g_k‖ ≤ tol / √K.
inline ConvergenceReport solve_one_vs_all(const Matrix& z, std::span<const ClassId> y, int k,
                                          double lambda, double tol, int max_iter, Matrix& b) {
  ConvergenceReport rep;
  rep.converged = true;
  if (b.rows() != z.cols() || b.cols() != k) b = Matrix::Zero(z.cols(), k);
  const Eigen::Index m = z.rows();
  const double col_tol = tol / std::sqrt(static_cast<double>(k));
  double total_sq = 0.0;
  Vector sign(m);
  for (int c = 0; c < k; ++c) {
    for (Eigen::Index i = 0; i < m; ++i) sign(i) = y[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
    Vector w = b.col(c);
    auto value = [&](const Vector& wv) {
      Vector margin = (z * wv).cwiseProduct(sign);
      double t = lambda * wv.squaredNorm();
      for (Eigen::Index i = 0; i < m; ++i) t += log1p_exp_neg(margin(i));
      return t;
    };
    double f = value(w);
    int it = 0;
    double gnorm = 0.0;
    for (;; ++it) {
      Vector margin = (z * w).cwiseProduct(sign);
      Vector coef(m), curv(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double s_neg = sigmoid(-margin(i));
        coef(i) = -sign(i) * s_neg;
        curv(i) = s_neg * (1.0 - s_neg);
      }
      Vector g = z.transpose() * coef + 2.0 * lambda * w;
      gnorm = g.norm();
      if (gnorm <= col_tol || it >= max_iter) break;
      Matrix h = z.transpose() * curv.asDiagonal() * z;
      h.diagonal().array() += 2.0 * lambda;
      Vector s = -h.llt().solve(g);
      const double slope = g.dot(s);
      double step = 1.0;
      Vector trial;
      double f_trial = 0.0;
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        trial = w + step * s;
        f_trial = value(trial);
        if (armijo_ok(f_trial, f, step, slope)) break;
      }
      w = std::move(trial);
      f = f_trial;
    }
    b.col(c) = w;
    total_sq += gnorm * gnorm;
    rep.iterations = std::max(rep.iterations, it);
    if (gnorm > col_tol) rep.converged = false;
  }
  rep.gradient_norm = std::sqrt(total_sq);
  return rep;
}

inline ConvergenceReport solve(LinkMode mode, const Matrix& z, std::span<const ClassId> y, int k,
                               double lambda, double tol, int max_iter, Matrix& b) {
  return mode == LinkMode::Softmax ? solve_softmax(z, y, k, lambda, tol, max_iter, b)
                                   : solve_one_vs_all(z, y, k, lambda, tol, max_iter, b);
}

/// Orthonormal basis (d × r) of the row span of `rows`; r is the numerical rank.
inline Matrix row_space_basis(const Matrix& rows) {
  const Eigen::Index d = rows.cols();
  if (rows.rows() == 0 || d == 0) return Matrix(d, 0);
  Eigen::ColPivHouseholderQR<Matrix> qr(rows.transpose());
  qr.setThreshold(1e-12);
  const Eigen::Index r = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(d, r);
  return q;
}

}  // namespace detail

/// Row-wise class probabilities of x̃ W under the weights' link.
inline Matrix predict_proba(const RegressionWeights& w, const Matrix& rows) {
  if (rows.cols() != w.w.rows())
    throw InvalidArgument("feature dimension " + std::to_string(rows.cols()) +
                          " does not match weights (" + std::to_string(w.w.rows()) + ")");
  return detail::link(rows * w.w, w.mode);
}

/// Index of the largest entry; ties go to the smallest class index.
template <typename Row>
inline ClassId argmax(const Row& row) {
  ClassId best = 0;
  for (Eigen::Index k = 1; k < row.size(); ++k)
    if (row(k) > row(best)) best = static_cast<ClassId>(k);
  return best;
}

inline std::vector<ClassId> predict(const RegressionWeights& w, const Matrix& rows) {
  Matrix p = predict_proba(w, rows);
  std::vector<ClassId> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(p.row(i));
  return out;
}

/// Training objective J(W) for the given mode.
inline double objective(const Matrix& rows, std::span<const ClassId> y, const Matrix& w,
                        double lambda, LinkMode mode) {
  if (mode == LinkMode::Softmax)
    return detail::SoftmaxObjective(rows, y, static_cast<int>(w.cols()), lambda).value(w);
  Matrix logits = rows * w;
  double total = lambda * w.squaredNorm();
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double s = y[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
      total += log1p_exp_neg(s * logits(i, c));
    }
  return total;
}

/// Analytic ∇J(W).
inline Matrix gradient(const Matrix& rows, std::span<const ClassId> y, const Matrix& w,
                       double lambda, LinkMode mode) {
  if (mode == LinkMode::Softmax) {
    detail::SoftmaxObjective obj(rows, y, static_cast<int>(w.cols()), lambda);
    return obj.gradient(w);
  }
  Matrix logits = rows * w;
  Matrix coef(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double s = y[static_cast<std::size_t>(i)] == c ? 1.0 : -1.0;
      coef(i, c) = -s * sigmoid(-s * logits(i, c));
    }
  return rows.transpose() * coef + 2.0 * lambda * w;
}

/// Fits W on labelled feature rows (m × d) with classes in [0, class_count).
inline RegressionWeights fit(const Matrix& rows, std::span<const ClassId> y, int class_count,
                             const SolverConfig& cfg) {
  cfg.validate();
  if (rows.rows() == 0) throw InvalidArgument("cannot fit on an empty label set");
  detail::require(static_cast<std::size_t>(rows.rows()) == y.size(),
                  "feature rows and labels differ in length");
  detail::require(class_count > 0, "class count must be positive");
  for (ClassId c : y)
    detail::require(c >= 0 && c < class_count, "label " + std::to_string(c) + " out of range");

  const Eigen::Index d = rows.cols();
  const bool reduce = d > rows.rows();
  Matrix basis;
  Matrix z;
  if (reduce) {
    basis = detail::row_space_basis(rows);
    z = rows * basis;
  }
  const Matrix& design = reduce ? z : rows;

  Matrix b;
  if (cfg.warm_start && cfg.warm_start->rows() == d && cfg.warm_start->cols() == class_count)
    b = reduce ? Matrix(basis.transpose() * *cfg.warm_start) : *cfg.warm_start;
  else
    b = Matrix::Zero(design.cols(), class_count);

  RegressionWeights out;
  out.mode = cfg.mode;
  out.lambda = cfg.lambda;
  out.report = detail::solve(cfg.mode, design, y, class_count, cfg.lambda, cfg.tol, cfg.max_iter, b);
  out.w = reduce ? Matrix(basis * b) : b;
  return out;
}

inline RegressionWeights fit(const Matrix& features, const LabelState& state,
                             const SolverConfig& cfg) {
  return fit(gather_rows(features, state.labelled()), state.labels(), state.class_count(), cfg);
}

/// log Π_i p(y_i | x̃_i, W) over the labelled rows; 0 for an empty set.
inline double log_evidence(const RegressionWeights& w, const Matrix& rows,
                           std::span<const ClassId> y) {
  detail::require(static_cast<std::size_t>(rows.rows()) == y.size(),
                  "feature rows and labels differ in length");
  if (rows.rows() == 0) return 0.0;
  Matrix logits = rows * w.w;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const ClassId yi = y[static_cast<std::size_t>(i)];
    if (w.mode == LinkMode::Softmax) {
      const double m = logits.row(i).maxCoeff();
      total += logits(i, yi) - m - std::log((logits.row(i).array() - m).exp().sum());
    } else {
      double c = 0.0;
      for (Eigen::Index k = 0; k < logits.cols(); ++k) c += sigmoid(logits(i, k));
      total += std::log(sigmoid(logits(i, yi))) - std::log(c);
    }
  }
  return total;
}

}  // namespace graphal
