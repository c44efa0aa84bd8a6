#pragma once

// Offline experiment harness: repeated trials of an active-learning strategy
// against a simulated oracle, with accuracy curves and bootstrap intervals.

#include "graphal/labelprop.hpp"
#include "graphal/pregeem.hpp"
#include "graphal/synthetic.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace graphal {

enum class Strategy { Random, Geem, Pregeem, Combined, LpOnly };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::Geem: return "geem";
    case Strategy::Pregeem: return "pregeem";
    case Strategy::Combined: return "combined";
    case Strategy::LpOnly: return "lp-only";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  for (Strategy v : {Strategy::Random, Strategy::Geem, Strategy::Pregeem, Strategy::Combined,
                     Strategy::LpOnly})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown strategy '" + s + "'");
}

enum class Setting { Transductive, Inductive };

struct ExperimentConfig {
  std::string dataset;                   // path to a dataset container
  std::optional<SyntheticSpec> synthetic;  // used instead of a file when set
  int experiment = 1;
  Setting setting = Setting::Transductive;
  Strategy strategy = Strategy::Geem;
  int trials = 20;
  int budget = 30;
  std::optional<double> initial_fraction;
  std::optional<int> initial_count;
  double test_fraction = 0.2;
  double holdout_fraction = 0.0;
  std::uint64_t seed = 0;
  SolverConfig solver;
  std::size_t eval_subset_size = 500;
  std::size_t candidate_pool_size = 0;
  bool warm_start = true;
  PrepareOptions prepare;
  double epsilon = kDefaultEpsilon;
  bool bounds = false;
  int bootstrap_resamples = 10000;
  std::string outdir = "out";
  std::string profile = "full";

  /// |L0| for a working graph of n nodes.
  std::size_t initial_labels_for(std::size_t n) const {
    if (initial_count) return static_cast<std::size_t>(*initial_count);
    const double frac = initial_fraction.value_or(experiment == 1 ? 0.005 : 0.0);
    if (frac == 0.0) return 1;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))));
  }

  void validate() const {
    try {
      solver.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (dataset.empty() && !synthetic) throw ConfigError("config needs a 'dataset'");
    if (experiment != 1 && experiment != 2) throw ConfigError("experiment must be 1 or 2");
    if (trials < 1) throw ConfigError("trials must be at least 1");
    if (budget < 0) throw ConfigError("budget must be non-negative");
    if (initial_fraction && !(*initial_fraction > 0.0 && *initial_fraction < 1.0))
      throw ConfigError("initial_fraction must lie in (0, 1)");
    if (initial_count && *initial_count < 1) throw ConfigError("initial_count must be at least 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
      throw ConfigError("holdout_fraction must lie in [0, 1)");
    if (experiment == 1 && setting == Setting::Inductive)
      throw ConfigError("the inductive setting belongs to experiment 2");
    if (eval_subset_size < 1) throw ConfigError("eval_subset_size must be at least 1");
    if (!(epsilon >= 0.0 && std::isfinite(epsilon))) throw ConfigError("epsilon must be >= 0");
    if (bootstrap_resamples < 1) throw ConfigError("bootstrap_resamples must be at least 1");
    if (prepare.hops < 0) throw ConfigError("hops must be non-negative");
  }
};

namespace detail {

template <typename T>
T config_value(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  if (j.contains("profile")) {
    c.profile = detail::config_value<std::string>(j.at("profile"), "profile");
    if (c.profile == "smoke") {
      c.trials = 5;
      c.candidate_pool_size = 100;
      c.eval_subset_size = 200;
    } else if (c.profile != "full") {
      throw ConfigError("profile must be 'full' or 'smoke'");
    }
  }
  for (const auto& [key, v] : j.items()) {
    using detail::config_value;
    if (key == "profile") continue;
    if (key == "dataset") {
      if (v.is_object() && v.contains("synthetic")) {
        c.synthetic = synthetic_spec_from_json(v.at("synthetic"));
      } else {
        c.dataset = config_value<std::string>(v, key);
      }
    } else if (key == "experiment") c.experiment = config_value<int>(v, key);
    else if (key == "setting") {
      const auto s = config_value<std::string>(v, key);
      if (s == "transductive") c.setting = Setting::Transductive;
      else if (s == "inductive") c.setting = Setting::Inductive;
      else throw ConfigError("setting must be 'transductive' or 'inductive'");
    }
    else if (key == "strategy") c.strategy = strategy_from_string(config_value<std::string>(v, key));
    else if (key == "trials") c.trials = config_value<int>(v, key);
    else if (key == "budget") c.budget = config_value<int>(v, key);
    else if (key == "initial_fraction") {
      if (!v.is_null()) c.initial_fraction = config_value<double>(v, key);
    }
    else if (key == "initial_count") {
      if (!v.is_null()) c.initial_count = config_value<int>(v, key);
    }
    else if (key == "test_fraction") c.test_fraction = config_value<double>(v, key);
    else if (key == "holdout_fraction") c.holdout_fraction = config_value<double>(v, key);
    else if (key == "seed") c.seed = config_value<std::uint64_t>(v, key);
    else if (key == "lambda") c.solver.lambda = config_value<double>(v, key);
    else if (key == "mode") {
      try {
        c.solver.mode = link_mode_from_string(config_value<std::string>(v, key));
      } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
      }
    }
    else if (key == "tol") c.solver.tol = config_value<double>(v, key);
    else if (key == "max_iter") c.solver.max_iter = config_value<int>(v, key);
    else if (key == "eval_subset_size") c.eval_subset_size = config_value<std::size_t>(v, key);
    else if (key == "candidate_pool_size") c.candidate_pool_size = config_value<std::size_t>(v, key);
    else if (key == "warm_start") c.warm_start = config_value<bool>(v, key);
    else if (key == "hops") c.prepare.hops = config_value<int>(v, key);
    else if (key == "row_normalize") c.prepare.row_normalize = config_value<bool>(v, key);
    else if (key == "largest_component") c.prepare.largest_component = config_value<bool>(v, key);
    else if (key == "epsilon") c.epsilon = config_value<double>(v, key);
    else if (key == "bounds") c.bounds = config_value<bool>(v, key);
    else if (key == "bootstrap_resamples") c.bootstrap_resamples = config_value<int>(v, key);
    else if (key == "outdir") c.outdir = config_value<std::string>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.synthetic)
    j["dataset"] = {{"synthetic", to_json(*c.synthetic)}};
  else
    j["dataset"] = c.dataset;
  j["profile"] = c.profile;
  j["experiment"] = c.experiment;
  j["setting"] = c.setting == Setting::Inductive ? "inductive" : "transductive";
  j["strategy"] = to_string(c.strategy);
  j["trials"] = c.trials;
  j["budget"] = c.budget;
  j["initial_fraction"] = c.initial_fraction ? nlohmann::json(*c.initial_fraction) : nlohmann::json(nullptr);
  j["initial_count"] = c.initial_count ? nlohmann::json(*c.initial_count) : nlohmann::json(nullptr);
  j["test_fraction"] = c.test_fraction;
  j["holdout_fraction"] = c.holdout_fraction;
  j["seed"] = c.seed;
  j["lambda"] = c.solver.lambda;
  j["mode"] = to_string(c.solver.mode);
  j["tol"] = c.solver.tol;
  j["max_iter"] = c.solver.max_iter;
  j["eval_subset_size"] = c.eval_subset_size;
  j["candidate_pool_size"] = c.candidate_pool_size;
  j["warm_start"] = c.warm_start;
  j["hops"] = c.prepare.hops;
  j["row_normalize"] = c.prepare.row_normalize;
  j["largest_component"] = c.prepare.largest_component;
  j["epsilon"] = c.epsilon;
  j["bounds"] = c.bounds;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  j["outdir"] = c.outdir;
  return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

/// Percentile bootstrap interval of the mean: resample with replacement,
/// take the `lo`/`hi` quantiles (linear interpolation) of the resampled means.
inline std::pair<double, double> bootstrap_ci(std::span<const double> values, int resamples,
                                              std::uint64_t seed, double lo = 0.05, double hi = 0.95) {
  if (values.size() < 2) throw InvalidArgument("bootstrap needs at least two values");
  detail::require(resamples >= 1, "bootstrap needs at least one resample");
  detail::require(lo >= 0.0 && lo <= hi && hi <= 1.0, "bootstrap levels must satisfy 0 <= lo <= hi <= 1");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
    m = s / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(means.size() - 1);
    const auto below = static_cast<std::size_t>(std::floor(pos));
    const auto above = std::min(below + 1, means.size() - 1);
    return means[below] + (pos - static_cast<double>(below)) * (means[above] - means[below]);
  };
  return {quantile(lo), quantile(hi)};
}

struct BoundRow {
  int step = 0;
  NodeId query = -1;
  double bound = 0.0;
  double realized = 0.0;
  std::size_t vacuous_count = 0;
};

struct TrialResult {
  int trial = 0;
  std::vector<NodeId> initial;
  std::size_t test_size = 0;
  std::vector<NodeId> evaluation;  // test set (experiment 1) or held-out nodes
  std::vector<NodeId> queries;
  std::vector<double> accuracy;      // accuracy[0] is the initial model
  std::vector<double> step_seconds;  // selection time per query (not in run.json)
  std::vector<std::array<double, 2>> model_weights;
  std::vector<BoundRow> bounds;
};

struct RunArtifact {
  ExperimentConfig config;
  nlohmann::json dataset;
  std::vector<TrialResult> trials;
  std::vector<double> mean;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<double> mean_step_seconds;
};

/// run.json content. Wall-clock times are excluded so the file is
/// reproducible byte for byte; they go to timing.json and curve.csv.
inline nlohmann::json to_json(const RunArtifact& r) {
  nlohmann::json j;
  j["config"] = to_json(r.config);
  j["dataset"] = r.dataset;
  auto trials = nlohmann::json::array();
  for (const auto& t : r.trials) {
    nlohmann::json e{{"trial", t.trial},
                     {"initial_labels", t.initial},
                     {"test_size", t.test_size},
                     {"evaluation_nodes", t.evaluation},
                     {"queries", t.queries},
                     {"accuracy", t.accuracy}};
    if (!t.model_weights.empty()) e["model_weights"] = t.model_weights;
    if (!t.bounds.empty()) {
      auto b = nlohmann::json::array();
      for (const auto& row : t.bounds)
        b.push_back({{"step", row.step},
                     {"query", row.query},
                     {"bound", row.bound},
                     {"realized", row.realized},
                     {"vacuous_count", row.vacuous_count}});
      e["bounds"] = std::move(b);
    }
    trials.push_back(std::move(e));
  }
  j["trials"] = std::move(trials);
  j["curve"] = {{"mean", r.mean}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high}};
  return j;
}

/// Fraction of rows whose argmax matches `truth`; an empty set counts as 1.
inline double accuracy_of(const Matrix& probs, const std::vector<ClassId>& truth) {
  if (probs.rows() == 0) return 1.0;
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    if (argmax(probs.row(i)) == truth[static_cast<std::size_t>(i)]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(probs.rows());
}

/// Class probabilities for every node under the strategy's predictor: the
/// harmonic model for lp-only, the model average for combined, SGC otherwise.
inline Matrix strategy_predict(Strategy s, const Matrix& features, const Graph& g, const LabelState& state,
                               const SolverConfig& cfg, double epsilon) {
  switch (s) {
    case Strategy::LpOnly:
      return harmonic_predict(g, state, epsilon);
    case Strategy::Combined: {
      const auto post = model_posterior(state, features, g, cfg, epsilon);
      return combined_predict(state, features, g, cfg, post, epsilon);
    }
    default:
      return predict_proba(fit(features, state, cfg), features);
  }
}

/// Accuracy over the current unlabelled nodes.
inline double transductive_accuracy(Strategy s, const Matrix& features, const Graph& g,
                                    const LabelState& state, const SolverConfig& cfg, double epsilon,
                                    const std::vector<ClassId>& truth) {
  const auto u = state.unlabelled();
  if (u.empty()) return 1.0;
  const Matrix p = strategy_predict(s, features, g, state, cfg, epsilon);
  std::vector<ClassId> t;
  t.reserve(u.size());
  for (NodeId i : u) t.push_back(truth.at(static_cast<std::size_t>(i)));
  return accuracy_of(gather_rows(p, u), t);
}

namespace detail {

/// Everything one trial works on. For the inductive setting `graph` and
/// `features` describe the non-held-out subgraph; `scoring_features` are the
/// full-graph propagated rows of the held-out nodes.
struct TrialWorld {
  Graph graph;
  Matrix features;
  std::vector<ClassId> truth;
  std::vector<NodeId> held_out;  // indices in the full working graph
  Matrix held_out_features;
  std::vector<ClassId> held_out_truth;
  std::vector<NodeId> original;  // working index -> full working-graph index
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class TrialRunner {
 public:
  TrialRunner(const ExperimentConfig& cfg, const WorkingGraph& wg, int trial)
      : cfg_(cfg), wg_(wg), trial_(trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(trial)};
    rng_.seed(seq);
    opt_.eval_subset_size = cfg.eval_subset_size;
    opt_.candidate_pool_size = cfg.candidate_pool_size;
    opt_.warm_start = cfg.warm_start;
  }

  TrialResult run() {
    build_world();
    const auto n = static_cast<std::size_t>(world_.graph.node_count());
    const std::size_t l0 = std::min(cfg_.initial_labels_for(n), n);
    std::vector<NodeId> all(n);
    std::iota(all.begin(), all.end(), NodeId{0});
    std::shuffle(all.begin(), all.end(), rng_);
    std::vector<NodeId> initial(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(l0));
    std::vector<NodeId> rest(all.begin() + static_cast<std::ptrdiff_t>(l0), all.end());
    std::sort(rest.begin(), rest.end());

    std::vector<NodeId> test;
    if (cfg_.experiment == 1) {
      const auto t = static_cast<std::size_t>(std::llround(cfg_.test_fraction * static_cast<double>(rest.size())));
      test = sample_sorted(rest, t, rng_);
      if (static_cast<std::size_t>(cfg_.budget) > rest.size() - test.size())
        throw ConfigError("budget " + std::to_string(cfg_.budget) + " exceeds the " +
                          std::to_string(rest.size() - test.size()) + " queryable nodes");
    } else if (static_cast<std::size_t>(cfg_.budget) > rest.size() && n > 1) {
      throw ConfigError("budget " + std::to_string(cfg_.budget) + " exceeds the " +
                        std::to_string(rest.size()) + " unlabelled nodes");
    }
    is_test_.assign(n, 0);
    for (NodeId i : test) is_test_[static_cast<std::size_t>(i)] = 1;

    LabelState state(static_cast<NodeId>(n), world_.graph.class_count(), test);
    for (NodeId i : initial) state.add(i, oracle(i));

    TrialResult out;
    out.trial = trial_;
    for (NodeId i : initial) out.initial.push_back(original(i));
    out.test_size = cfg_.experiment == 1 ? test.size() : world_.held_out.size();
    if (cfg_.experiment == 1)
      for (NodeId i : test) out.evaluation.push_back(original(i));
    else
      out.evaluation = world_.held_out;
    out.accuracy.push_back(score(state, test));

    const int steps = std::min<int>(cfg_.budget, static_cast<int>(state.unlabelled_count()));
    std::optional<LabelState> previous;  // L_{t-1} for the preemptive simulation
    NodeId pending = -1;
    for (int step = 1; step <= steps; ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      const NodeId q = select(state, previous, pending, step, out);
      out.step_seconds.push_back(seconds_since(t0));
      if (!state.is_unlabelled(q) || is_test_[static_cast<std::size_t>(q)])
        throw std::logic_error("strategy selected a node outside the query pool");
      previous = state;
      pending = q;
      state.add(q, oracle(q));
      out.queries.push_back(original(q));
      out.accuracy.push_back(score(state, test));
    }
    return out;
  }

 private:
  void build_world() {
    const auto& full = wg_.graph;
    if (!full.has_labels()) throw DatasetError("benchmarks need ground-truth labels");
    const auto n = static_cast<std::size_t>(full.node_count());
    if (cfg_.experiment == 2 && cfg_.setting == Setting::Inductive) {
      std::vector<NodeId> all(n);
      std::iota(all.begin(), all.end(), NodeId{0});
      const auto h = static_cast<std::size_t>(std::llround(cfg_.holdout_fraction * static_cast<double>(n)));
      if (h >= n) throw ConfigError("holdout_fraction leaves an empty working graph");
      world_.held_out = sample_sorted(all, h, rng_);
      std::vector<char> held(n, 0);
      for (NodeId i : world_.held_out) held[static_cast<std::size_t>(i)] = 1;
      std::vector<NodeId> keep;
      for (std::size_t i = 0; i < n; ++i)
        if (!held[i]) keep.push_back(static_cast<NodeId>(i));
      auto sub = induced_subgraph(full, wg_.features, keep);
      const auto s = normalize_adjacency(sub.graph);
      world_.features = propagate_features(s, sub.features, cfg_.prepare.hops).values;
      world_.truth = sub.graph.labels();
      world_.original = std::move(sub.original_index);
      world_.graph = std::move(sub.graph);
      world_.held_out_features = gather_rows(wg_.propagated.values, world_.held_out);
      for (NodeId i : world_.held_out) world_.held_out_truth.push_back(full.labels()[static_cast<std::size_t>(i)]);
    } else {
      world_.graph = full;
      world_.features = wg_.propagated.values;
      world_.truth = full.labels();
      world_.original.resize(n);
      std::iota(world_.original.begin(), world_.original.end(), NodeId{0});
    }
  }

  ClassId oracle(NodeId i) const { return world_.truth[static_cast<std::size_t>(i)]; }
  NodeId original(NodeId i) const { return world_.original[static_cast<std::size_t>(i)]; }

  Matrix predict_all(const LabelState& state) const {
    return strategy_predict(cfg_.strategy, world_.features, world_.graph, state, cfg_.solver, cfg_.epsilon);
  }

  double score(const LabelState& state, const std::vector<NodeId>& test) const {
    if (cfg_.experiment == 1) {
      const Matrix p = predict_all(state);
      std::vector<ClassId> truth;
      for (NodeId i : test) truth.push_back(oracle(i));
      return accuracy_of(gather_rows(p, test), truth);
    }
    if (!world_.held_out.empty()) {
      // Held-out nodes are scored with the regression weights on full-graph
      // features; propagation cannot reach nodes it never saw.
      if (cfg_.strategy == Strategy::LpOnly)
        return accuracy_of(Matrix::Constant(static_cast<Eigen::Index>(world_.held_out.size()), state.class_count(),
                                            1.0 / state.class_count()),
                           world_.held_out_truth);
      const auto w = fit(world_.features, state, cfg_.solver);
      return accuracy_of(predict_proba(w, world_.held_out_features), world_.held_out_truth);
    }
    return transductive_accuracy(cfg_.strategy, world_.features, world_.graph, state, cfg_.solver,
                                 cfg_.epsilon, world_.truth);
  }

  NodeId select(const LabelState& state, const std::optional<LabelState>& previous, NodeId pending,
                int step, TrialResult& out) {
    const auto pool = state.unlabelled();
    const Matrix& x = world_.features;
    switch (cfg_.strategy) {
      case Strategy::Random: {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        return pool[pick(rng_)];
      }
      case Strategy::Geem:
        return select_query(x, state, cfg_.solver, pool, opt_, rng_).selected;
      case Strategy::Pregeem: {
        if (!previous) return select_query(x, state, cfg_.solver, pool, opt_, rng_).selected;
        // The query for this step was computed while `pending` was still
        // being labelled: L_{t-1} plus its predicted label.
        const auto ctx = make_preemptive_context(x, *previous, pending, cfg_.solver);
        const auto report = select_query_preemptive(ctx, *previous, x, cfg_.solver, pool, opt_, rng_);
        if (cfg_.bounds && report.eval_subset.size() > 1) {
          const auto b = risk_bound_with_realized(report.selected, ctx, oracle(pending), *previous, x,
                                                  cfg_.solver, report.eval_subset);
          out.bounds.push_back({step, original(report.selected), b.bound, *b.realized, b.vacuous_count});
        }
        return report.selected;
      }
      case Strategy::Combined: {
        const auto report = combined_select(x, world_.graph, state, cfg_.solver, pool, cfg_.epsilon, opt_, rng_);
        out.model_weights.push_back(*report.model_weights);
        return report.selected;
      }
      case Strategy::LpOnly:
        return lp_select(world_.graph, state, pool, cfg_.epsilon, opt_, rng_).selected;
    }
    throw std::logic_error("unhandled strategy");
  }

  const ExperimentConfig& cfg_;
  const WorkingGraph& wg_;
  int trial_;
  Rng rng_;
  SelectOptions opt_;
  TrialWorld world_;
  std::vector<char> is_test_;
};

inline nlohmann::json describe(const WorkingGraph& wg) {
  return {{"name", wg.name},
          {"nodes", wg.graph.node_count()},
          {"edges", wg.graph.edge_count()},
          {"features", wg.features.cols()},
          {"classes", wg.graph.class_count()},
          {"row_normalize", wg.options.row_normalize},
          {"largest_component", wg.options.largest_component},
          {"hops", wg.options.hops},
          {"original_index", wg.original_index}};
}

}  // namespace detail

inline Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
  return cfg.synthetic ? make_synthetic(*cfg.synthetic) : load_dataset(cfg.dataset);
}

/// Runs every trial and aggregates the curves.
inline RunArtifact run_experiment(const ExperimentConfig& cfg, const WorkingGraph& wg) {
  cfg.validate();
  RunArtifact art;
  art.config = cfg;
  art.dataset = detail::describe(wg);
  for (int t = 0; t < cfg.trials; ++t) art.trials.push_back(detail::TrialRunner(cfg, wg, t).run());

  std::size_t len = art.trials.front().accuracy.size();
  for (const auto& t : art.trials) len = std::min(len, t.accuracy.size());
  for (std::size_t s = 0; s < len; ++s) {
    std::vector<double> v;
    double secs = 0.0;
    for (const auto& t : art.trials) {
      v.push_back(t.accuracy[s]);
      if (s > 0) secs += t.step_seconds[s - 1];
    }
    double m = 0.0;
    for (double a : v) m += a;
    m /= static_cast<double>(v.size());
    art.mean.push_back(m);
    art.mean_step_seconds.push_back(secs / static_cast<double>(v.size()));
    if (v.size() >= 2) {
      const auto [lo, hi] = bootstrap_ci(v, cfg.bootstrap_resamples, cfg.seed + 1000003ULL * s);
      art.ci_low.push_back(lo);
      art.ci_high.push_back(hi);
    } else {
      art.ci_low.push_back(m);
      art.ci_high.push_back(m);
    }
  }
  return art;
}

inline RunArtifact run_experiment(const ExperimentConfig& cfg) {
  const Dataset ds = load_experiment_dataset(cfg);
  return run_experiment(cfg, prepare(ds, cfg.prepare));
}

/// Experiment 1: fractional L0, a held-back test set, accuracy on that set.
inline RunArtifact run_experiment1(ExperimentConfig cfg, const WorkingGraph& wg) {
  cfg.experiment = 1;
  cfg.setting = Setting::Transductive;
  return run_experiment(cfg, wg);
}

/// Experiment 2: a single initial label unless configured otherwise.
inline RunArtifact run_experiment2(ExperimentConfig cfg, const WorkingGraph& wg, Setting setting) {
  cfg.experiment = 2;
  cfg.setting = setting;
  return run_experiment(cfg, wg);
}

inline std::string curve_csv(const RunArtifact& r) {
  std::string s = "step,mean_acc,ci_low,ci_high,mean_step_seconds\n";
  for (std::size_t i = 0; i < r.mean.size(); ++i)
    s += std::to_string(i) + "," + detail::format_double(r.mean[i]) + "," + detail::format_double(r.ci_low[i]) +
         "," + detail::format_double(r.ci_high[i]) + "," + detail::format_double(r.mean_step_seconds[i]) + "\n";
  return s;
}

inline std::string bounds_csv(const RunArtifact& r) {
  std::string s = "trial,step,query,bound,realized,vacuous_count\n";
  for (const auto& t : r.trials)
    for (const auto& b : t.bounds)
      s += std::to_string(t.trial) + "," + std::to_string(b.step) + "," + std::to_string(b.query) + "," +
           detail::format_double(b.bound) + "," + detail::format_double(b.realized) + "," +
           std::to_string(b.vacuous_count) + "\n";
  return s;
}

inline nlohmann::json timing_json(const RunArtifact& r) {
  auto trials = nlohmann::json::array();
  for (const auto& t : r.trials) trials.push_back({{"trial", t.trial}, {"step_seconds", t.step_seconds}});
  return {{"mean_step_seconds", r.mean_step_seconds}, {"trials", trials}};
}

/// Writes curve.csv, run.json, timing.json and (with diagnostics) bounds.csv.
inline void write_artifacts(const RunArtifact& r, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(outdir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (outdir / name).string());
    out << text;
  };
  write("curve.csv", curve_csv(r));
  write("run.json", to_json(r).dump(2) + "\n");
  write("timing.json", timing_json(r).dump(2) + "\n");
  if (r.config.bounds) write("bounds.csv", bounds_csv(r));
}

}  // namespace graphal
