#pragma once

// Live labelling sessions. A session owns a label state and at most one
// outstanding query. With the preemptive strategy the next query is computed
// in the background while the oracle is still labelling the current one;
// other strategies compute after the label arrives.
//
// Phases, derived from (outstanding query, background job, ready result):
//   Idle            no outstanding query and nothing running (finished)
//   AwaitingLabel   a query is outstanding, nothing running
//   ComputingNext   the next query is being computed
//   NextReady       the next query is computed, the current label not yet in

#include "graphal/bench.hpp"

#include <cctype>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <thread>

namespace graphal {

enum class Phase { Idle, AwaitingLabel, ComputingNext, NextReady };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::AwaitingLabel: return "AwaitingLabel";
    case Phase::ComputingNext: return "ComputingNext";
    case Phase::NextReady: return "NextReady";
  }
  return "?";
}

/// Rejected API call; `status` is the HTTP status it maps to.
class SessionError : public Error {
 public:
  SessionError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// A registered dataset as the engine sees it: no ground truth.
struct EngineDataset {
  std::string name;
  WorkingGraph working;  // graph carries no labels
};

/// Ground truth kept apart from the engine; only used to report accuracy.
struct AccuracyEvaluator {
  std::vector<ClassId> truth;
};

struct SessionConfig {
  std::string dataset;
  Strategy strategy = Strategy::Pregeem;
  std::uint64_t seed = 0;
  SolverConfig solver;
  std::size_t eval_subset_size = 500;
  std::size_t candidate_pool_size = 0;
  double epsilon = kDefaultEpsilon;
  int budget = 30;
  std::vector<std::pair<NodeId, ClassId>> initial_labels;
  bool diagnostics = false;
  int respond_within_ms = 250;  // how long a submit waits for the next query
};

inline SessionConfig session_config_from_json(const nlohmann::json& body) {
  if (!body.is_object()) throw ConfigError("request body must be a JSON object");
  SessionConfig c;
  auto get = [](const nlohmann::json& v, const std::string& key, auto& out) {
    try {
      v.get_to(out);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("field '" + key + "' has the wrong type");
    }
  };
  for (const auto& [key, v] : body.items()) {
    if (key == "dataset") get(v, key, c.dataset);
    else if (key == "strategy") {
      std::string s;
      get(v, key, s);
      c.strategy = strategy_from_string(s);
    } else if (key == "seed") get(v, key, c.seed);
    else if (key == "config") {
      if (!v.is_object()) throw ConfigError("'config' must be an object");
      for (const auto& [k, w] : v.items()) {
        if (k == "lambda") get(w, k, c.solver.lambda);
        else if (k == "mode") {
          std::string s;
          get(w, k, s);
          try {
            c.solver.mode = link_mode_from_string(s);
          } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
          }
        } else if (k == "tol") get(w, k, c.solver.tol);
        else if (k == "max_iter") get(w, k, c.solver.max_iter);
        else if (k == "eval_subset_size") get(w, k, c.eval_subset_size);
        else if (k == "candidate_pool_size") get(w, k, c.candidate_pool_size);
        else if (k == "epsilon") get(w, k, c.epsilon);
        else if (k == "budget") get(w, k, c.budget);
        else if (k == "diagnostics") get(w, k, c.diagnostics);
        else if (k == "respond_within_ms") get(w, k, c.respond_within_ms);
        else if (k == "initial_labels") {
          if (!w.is_array()) throw ConfigError("'initial_labels' must be an array");
          for (const auto& e : w) {
            if (e.is_array() && e.size() == 2 && e[0].is_number_integer() && e[1].is_number_integer())
              c.initial_labels.emplace_back(e[0].get<NodeId>(), e[1].get<ClassId>());
            else if (e.is_object() && e.contains("node") && e.contains("class") &&
                     e["node"].is_number_integer() && e["class"].is_number_integer())
              c.initial_labels.emplace_back(e["node"].get<NodeId>(), e["class"].get<ClassId>());
            else
              throw ConfigError("initial labels are [node, class] pairs");
          }
        } else throw ConfigError("unknown config key '" + k + "'");
      }
    } else throw ConfigError("unknown field '" + key + "'");
  }
  if (c.dataset.empty()) throw ConfigError("'dataset' is required");
  try {
    c.solver.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (c.budget < 1) throw ConfigError("budget must be at least 1");
  if (c.eval_subset_size < 1) throw ConfigError("eval_subset_size must be at least 1");
  if (!(c.epsilon >= 0.0 && std::isfinite(c.epsilon))) throw ConfigError("epsilon must be >= 0");
  if (c.respond_within_ms < 0) throw ConfigError("respond_within_ms must be >= 0");
  return c;
}

inline nlohmann::json to_json(const SessionConfig& c) {
  auto labels = nlohmann::json::array();
  for (const auto& [n, y] : c.initial_labels) labels.push_back({n, y});
  return {{"dataset", c.dataset},
          {"strategy", to_string(c.strategy)},
          {"seed", c.seed},
          {"config",
           {{"lambda", c.solver.lambda},
            {"mode", to_string(c.solver.mode)},
            {"tol", c.solver.tol},
            {"max_iter", c.solver.max_iter},
            {"eval_subset_size", c.eval_subset_size},
            {"candidate_pool_size", c.candidate_pool_size},
            {"epsilon", c.epsilon},
            {"budget", c.budget},
            {"diagnostics", c.diagnostics},
            {"respond_within_ms", c.respond_within_ms},
            {"initial_labels", labels}}}};
}

/// Stateless selection rule shared by live sessions and offline replay.
class QueryEngine {
 public:
  QueryEngine(std::shared_ptr<const EngineDataset> data, SessionConfig cfg)
      : data_(std::move(data)), cfg_(std::move(cfg)) {}

  const Matrix& features() const { return data_->working.propagated.values; }
  const Graph& graph() const { return data_->working.graph; }
  const SessionConfig& config() const { return cfg_; }

  LabelState initial_state() const {
    if (cfg_.initial_labels.empty())
      throw ConfigError("at least one initial label is required");
    LabelState s(graph().node_count(), graph().class_count());
    try {
      for (const auto& [n, y] : cfg_.initial_labels) s.add(n, y);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("invalid initial labels: ") + e.what());
    }
    return s;
  }

  struct Selection {
    NodeId query = -1;
    std::optional<RiskReport> report;
    std::optional<PreemptiveContext> context;
  };

  /// Query number `step` (0-based). For the preemptive strategy and step > 0,
  /// `labels` must not yet contain `pending`, the previous query.
  Selection select(const LabelState& labels, NodeId pending, std::size_t step,
                   const std::atomic<bool>* cancel) const {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg_.seed), static_cast<std::uint32_t>(cfg_.seed >> 32),
                      static_cast<std::uint32_t>(step)};
    Rng rng(seq);
    SelectOptions opt;
    opt.eval_subset_size = cfg_.eval_subset_size;
    opt.candidate_pool_size = cfg_.candidate_pool_size;
    opt.cancel = cancel;
    Selection out;
    std::vector<NodeId> pool = labels.unlabelled();
    if (pending >= 0 && cfg_.strategy == Strategy::Pregeem)
      pool.erase(std::remove(pool.begin(), pool.end(), pending), pool.end());
    if (pool.empty()) return out;
    switch (cfg_.strategy) {
      case Strategy::Random: {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        out.query = pool[pick(rng)];
        return out;
      }
      case Strategy::Geem:
        out.report = select_query(features(), labels, cfg_.solver, pool, opt, rng);
        break;
      case Strategy::Pregeem:
        if (pending < 0) {
          out.report = select_query(features(), labels, cfg_.solver, pool, opt, rng);
        } else {
          out.context = make_preemptive_context(features(), labels, pending, cfg_.solver);
          out.report = select_query_preemptive(*out.context, labels, features(), cfg_.solver, pool, opt, rng);
        }
        break;
      case Strategy::Combined:
        out.report = combined_select(features(), graph(), labels, cfg_.solver, pool, cfg_.epsilon, opt, rng);
        break;
      case Strategy::LpOnly:
        out.report = lp_select(graph(), labels, pool, cfg_.epsilon, opt, rng);
        break;
    }
    out.query = out.report->selected;
    return out;
  }

  /// Decision context shown to the oracle for node q.
  nlohmann::json context(NodeId q, const LabelState& labels) const {
    const auto& x = data_->working.features.sparse();
    std::vector<std::pair<Eigen::Index, double>> nz;
    for (SparseMatrix::InnerIterator it(x, q); it; ++it)
      if (it.value() != 0.0) nz.emplace_back(it.col(), it.value());
    std::stable_sort(nz.begin(), nz.end(), [](const auto& a, const auto& b) {
      return std::abs(a.second) > std::abs(b.second);
    });
    if (nz.size() > 10) nz.resize(10);
    auto top = nlohmann::json::array();
    for (const auto& [c, v] : nz) top.push_back({{"index", c}, {"value", v}});

    std::vector<int> hist(static_cast<std::size_t>(graph().class_count()), 0);
    int unlabelled = 0;
    std::map<NodeId, ClassId> known;
    for (std::size_t t = 0; t < labels.size(); ++t) known[labels.labelled()[t]] = labels.labels()[t];
    const auto nb = graph().neighbors(q);
    for (NodeId j : nb) {
      auto it = known.find(j);
      if (it == known.end())
        ++unlabelled;
      else
        ++hist[static_cast<std::size_t>(it->second)];
    }
    const Matrix p = strategy_predict(cfg_.strategy, features(), graph(), labels, cfg_.solver, cfg_.epsilon);
    const RowVector pq = p.row(q);
    return {{"node", q},
            {"top_features", top},
            {"neighbor_count", nb.size()},
            {"neighbor_label_histogram", hist},
            {"unlabelled_neighbors", unlabelled},
            {"probabilities", std::vector<double>(pq.data(), pq.data() + pq.size())},
            {"predicted", argmax(pq)}};
  }

 private:
  std::shared_ptr<const EngineDataset> data_;
  SessionConfig cfg_;
};

/// Replays a label sequence through the selector offline; returns the
/// query issued before each label plus the one after the last.
inline std::vector<NodeId> replay_queries(const QueryEngine& engine,
                                          const std::vector<std::pair<NodeId, ClassId>>& answers) {
  LabelState labels = engine.initial_state();
  std::vector<NodeId> queries;
  auto first = engine.select(labels, -1, 0, nullptr);
  NodeId q = first.query;
  for (std::size_t t = 0; t < answers.size() && q >= 0; ++t) {
    queries.push_back(q);
    if (answers[t].first != q) throw InvalidArgument("answer sequence does not follow the queries");
    NodeId next = -1;
    if (t + 1 < static_cast<std::size_t>(engine.config().budget)) {
      if (engine.config().strategy == Strategy::Pregeem) {
        next = engine.select(labels, q, t + 1, nullptr).query;
        labels.add(q, answers[t].second);
      } else {
        labels.add(q, answers[t].second);
        next = engine.select(labels, -1, t + 1, nullptr).query;
      }
    } else {
      labels.add(q, answers[t].second);
    }
    q = next;
  }
  if (q >= 0) queries.push_back(q);
  return queries;
}

/// Append-only JSON-lines event log.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::filesystem::path& path) : path_(path) {
    out_.open(path, std::ios::app);
    if (!out_) throw Error("cannot open event log " + path.string());
  }
  bool enabled() const { return out_.is_open(); }
  void append(const nlohmann::json& event) {
    if (!out_.is_open()) return;
    out_ << event.dump() << '\n';
    out_.flush();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct StepRecord {
  std::size_t step = 0;
  NodeId query = -1;
  double issued_at = 0.0;
  std::optional<double> submitted_at;
  std::optional<ClassId> label;
  std::optional<ClassId> predicted;  // label predicted for this query while it was pending
  // Computation of the query that follows this one.
  std::optional<double> next_compute_started;
  std::optional<double> next_compute_finished;
  std::optional<double> accuracy;
  std::optional<BoundReport> bound;

  std::optional<double> oracle_seconds() const {
    return submitted_at ? std::optional<double>(*submitted_at - issued_at) : std::nullopt;
  }
  std::optional<double> compute_seconds() const {
    if (next_compute_started && next_compute_finished) return *next_compute_finished - *next_compute_started;
    return std::nullopt;
  }
  /// Time the oracle waits after submitting before the next query exists.
  std::optional<double> idle_seconds() const {
    if (submitted_at && next_compute_finished) return std::max(0.0, *next_compute_finished - *submitted_at);
    return std::nullopt;
  }
};

struct SessionOptions {
  std::optional<std::filesystem::path> log_path;
  /// Called at the start of every background computation (tests use it to
  /// hold a session in ComputingNext).
  std::function<void()> compute_hook;
  bool synchronous = false;  // run computations inline (replay / recovery)
};

class Session {
 public:
  Session(std::string id, std::shared_ptr<const EngineDataset> data,
          std::shared_ptr<const AccuracyEvaluator> truth, SessionConfig cfg, SessionOptions opt = {})
      : id_(std::move(id)), engine_(std::move(data), std::move(cfg)), truth_(std::move(truth)),
        opt_(std::move(opt)), epoch_(std::chrono::steady_clock::now()), labels_(engine_.initial_state()) {
    if (opt_.log_path) log_ = std::make_unique<EventLog>(*opt_.log_path);
    log_event({{"event", "create"}, {"config", to_json(engine_.config())}});
    if (engine_.config().budget > static_cast<int>(labels_.unlabelled_count()))
      throw ConfigError("budget exceeds the number of unlabelled nodes");
    first_compute_started_ = now();
    log_event({{"event", "compute-started"}, {"pending", nullptr}, {"step", 0}});
    auto sel = engine_.select(labels_, -1, 0, nullptr);
    first_compute_finished_ = now();
    log_event({{"event", "compute-finished"}, {"next", sel.query}, {"step", 0}});
    std::unique_lock lock(mu_);
    issue(sel.query, lock);
  }

  ~Session() { shutdown(); }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const QueryEngine& engine() const { return engine_; }

  /// Starts appending events to `path` (used after recovery replay).
  void attach_log(const std::filesystem::path& path) {
    std::lock_guard lock(mu_);
    log_ = std::make_unique<EventLog>(path);
  }

  /// Aborts any in-flight computation and waits for worker threads.
  void shutdown() {
    cancel_ = true;
    cv_.notify_all();
    for (;;) {
      std::vector<std::thread> threads;
      {
        std::lock_guard lock(mu_);
        threads.swap(threads_);
      }
      if (threads.empty()) return;
      for (auto& t : threads)
        if (t.joinable()) t.join();
    }
  }

  Phase phase() const {
    std::lock_guard lock(mu_);
    return phase_locked();
  }

  std::uint64_t revision() const {
    std::lock_guard lock(mu_);
    return revision_;
  }

  std::optional<NodeId> outstanding() const {
    std::lock_guard lock(mu_);
    return outstanding_;
  }

  LabelState labels() const {
    std::lock_guard lock(mu_);
    return labels_;
  }

  /// Blocks until no computation is running (or the timeout passes).
  bool wait_idle(std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return !computing_; });
  }

  nlohmann::json create_response() const {
    std::lock_guard lock(mu_);
    nlohmann::json j{{"id", id_}, {"revision", revision_}, {"query", nullptr}, {"context", nullptr}};
    if (outstanding_) {
      j["query"] = *outstanding_;
      j["context"] = context_;
    }
    return j;
  }

  nlohmann::json submit_label(NodeId node, ClassId cls) {
    std::unique_lock lock(mu_);
    if (cls < 0 || cls >= engine_.graph().class_count())
      throw SessionError(400, "class " + std::to_string(cls) + " out of range");
    if (!outstanding_) {
      if (done_locked()) throw SessionError(409, "budget exhausted");
      throw SessionError(409, "no outstanding query");
    }
    if (node != *outstanding_)
      throw SessionError(409, "node " + std::to_string(node) + " is not the outstanding query " +
                                  std::to_string(*outstanding_));

    const std::size_t step = steps_.size() - 1;
    steps_[step].submitted_at = now();
    steps_[step].label = cls;
    labels_.add(node, cls);
    outstanding_.reset();
    ++revision_;
    log_event({{"event", "label-submitted"}, {"node", node}, {"class", cls}, {"step", step}});

    const bool preemptive = engine_.config().strategy == Strategy::Pregeem;
    if (preemptive) {
      if (ready_next_) {
        const NodeId next = *ready_next_;
        ready_next_.reset();
        finish_diagnostics(step, lock);
        issue(next, lock);
      } else if (!computing_) {
        // Nothing was being computed: the budget is spent or U is empty.
        finish_diagnostics(step, lock);
        ++revision_;
      }
    } else if (!done_locked()) {
      start_compute(-1, lock);
    }
    record_accuracy(step);

    if (!outstanding_ && computing_ && engine_.config().respond_within_ms > 0)
      cv_.wait_for(lock, std::chrono::milliseconds(engine_.config().respond_within_ms),
                   [&] { return outstanding_.has_value() || !computing_; });
    nlohmann::json j{{"revision", revision_}};
    if (outstanding_) {
      j["status"] = "next";
      j["query"] = *outstanding_;
      j["context"] = context_;
    } else if (computing_) {
      j["status"] = "pending";
    } else {
      j["status"] = "done";
    }
    return j;
  }

  nlohmann::json state() const {
    std::lock_guard lock(mu_);
    const Phase p = phase_locked();
    nlohmann::json j{{"id", id_},
                     {"revision", revision_},
                     {"dataset", engine_.config().dataset},
                     {"strategy", to_string(engine_.config().strategy)},
                     {"phase", to_string(p)},
                     {"query", outstanding_ ? nlohmann::json(*outstanding_) : nlohmann::json(nullptr)},
                     {"next_query", ready_next_ ? nlohmann::json(*ready_next_) : nlohmann::json(nullptr)},
                     {"pending", computing_ ? nlohmann::json(computing_for_) : nlohmann::json(nullptr)},
                     {"context", outstanding_ ? context_ : nlohmann::json(nullptr)},
                     {"labelled", labels_.size()},
                     {"budget", engine_.config().budget},
                     {"queries_issued", steps_.size()},
                     {"done", done_locked() && !outstanding_ && !computing_},
                     {"accuracy", accuracy_json()},
                     {"awaiting_label", outstanding_.has_value()},
                     {"error", last_error_ ? nlohmann::json(*last_error_) : nlohmann::json(nullptr)},
                     {"class_count", engine_.graph().class_count()}};
    auto hist = nlohmann::json::array();
    for (const auto& r : steps_) {
      if (!r.label) continue;
      nlohmann::json h{{"step", r.step},
                       {"query", r.query},
                       {"label", *r.label},
                       {"predicted", r.predicted ? nlohmann::json(*r.predicted) : nlohmann::json(nullptr)}};
      h["mismatch"] = r.predicted ? nlohmann::json(*r.predicted != *r.label) : nlohmann::json(nullptr);
      if (r.bound) h["bound"] = to_json(*r.bound);
      hist.push_back(std::move(h));
    }
    j["history"] = std::move(hist);
    return j;
  }

  nlohmann::json metrics() const {
    std::lock_guard lock(mu_);
    auto steps = nlohmann::json::array();
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    std::vector<double> curve;
    for (const auto& r : steps_) {
      nlohmann::json s{{"step", r.step},
                       {"query", r.query},
                       {"issued_at", r.issued_at},
                       {"submitted_at", opt(r.submitted_at)},
                       {"compute_started", opt(r.next_compute_started)},
                       {"compute_finished", opt(r.next_compute_finished)},
                       {"compute_seconds", opt(r.compute_seconds())},
                       {"oracle_seconds", opt(r.oracle_seconds())},
                       {"idle_seconds", opt(r.idle_seconds())},
                       {"accuracy", opt(r.accuracy)},
                       {"bound", r.bound ? to_json(*r.bound) : nlohmann::json(nullptr)}};
      if (r.accuracy) curve.push_back(*r.accuracy);
      steps.push_back(std::move(s));
    }
    return {{"id", id_},
            {"revision", revision_},
            {"first_query_seconds", first_compute_finished_ - first_compute_started_},
            {"initial_accuracy", opt(initial_accuracy_)},
            {"accuracy_curve", truth_ ? nlohmann::json(curve) : nlohmann::json(nullptr)},
            {"steps", steps}};
  }

 private:
  double now() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
  }

  bool done_locked() const { return static_cast<int>(steps_.size()) >= engine_.config().budget; }

  Phase phase_locked() const {
    if (computing_) return Phase::ComputingNext;
    if (ready_next_) return Phase::NextReady;
    if (outstanding_) return Phase::AwaitingLabel;
    return Phase::Idle;
  }

  nlohmann::json accuracy_json() const {
    if (!truth_) return nullptr;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it)
      if (it->accuracy) return *it->accuracy;
    return initial_accuracy_ ? nlohmann::json(*initial_accuracy_) : nlohmann::json(nullptr);
  }

  void log_event(nlohmann::json e) {
    if (!log_) return;
    e["session"] = id_;
    e["time"] = now();
    log_->append(e);
  }

  // Makes q the outstanding query and, for the preemptive strategy, starts
  // computing its successor right away.
  void issue(NodeId q, std::unique_lock<std::mutex>& lock) {
    if (q < 0) {
      ++revision_;
      cv_.notify_all();
      return;
    }
    StepRecord rec;
    rec.step = steps_.size();
    rec.query = q;
    rec.issued_at = now();
    steps_.push_back(rec);
    outstanding_ = q;
    context_ = engine_.context(q, labels_);
    if (steps_.size() == 1 && truth_ && !initial_accuracy_) initial_accuracy_ = accuracy_now();
    ++revision_;
    log_event({{"event", "query-issued"}, {"node", q}, {"step", rec.step}});
    cv_.notify_all();
    if (engine_.config().strategy == Strategy::Pregeem && !done_locked()) start_compute(q, lock);
  }

  void start_compute(NodeId pending, std::unique_lock<std::mutex>& lock) {
    computing_ = true;
    computing_for_ = pending >= 0 ? pending : steps_.back().query;
    const std::size_t step = steps_.size();
    steps_.back().next_compute_started = now();
    ++revision_;
    log_event({{"event", "compute-started"}, {"pending", computing_for_}, {"step", step}});
    LabelState snapshot = labels_;
    auto job = [this, snapshot = std::move(snapshot), pending, step] { run_compute(snapshot, pending, step); };
    if (opt_.synchronous) {
      lock.unlock();
      job();
      lock.lock();
    } else if (!cancel_) {
      threads_.emplace_back(std::move(job));
    } else {
      computing_ = false;
    }
  }

  void run_compute(const LabelState& snapshot, NodeId pending, std::size_t step) {
    if (opt_.compute_hook) opt_.compute_hook();
    QueryEngine::Selection sel;
    try {
      sel = engine_.select(snapshot, pending, step, &cancel_);
    } catch (const Cancelled&) {
      std::lock_guard lock(mu_);
      computing_ = false;
      cv_.notify_all();
      return;
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      computing_ = false;
      last_error_ = e.what();
      ++revision_;
      cv_.notify_all();
      return;
    }
    std::unique_lock lock(mu_);
    computing_ = false;
    auto& prev = steps_[step - 1];
    prev.next_compute_finished = now();
    if (sel.context) prev.predicted = sel.context->predicted;
    log_event({{"event", "compute-finished"}, {"next", sel.query}, {"step", step}});
    if (sel.context) {
      pending_context_ = sel.context;
      pending_report_ = sel.report;
      pending_snapshot_ = snapshot;
    }
    if (sel.query < 0) {
      ++revision_;
      cv_.notify_all();
      return;
    }
    if (outstanding_) {
      // Label for the pending query is still out: hold the result.
      ready_next_ = sel.query;
      ++revision_;
      cv_.notify_all();
      return;
    }
    finish_diagnostics(step - 1, lock);
    issue(sel.query, lock);
  }

  // Bound diagnostics for the preemptive choice made while steps_[step] was
  // pending; needs its true label, so runs once both are known.
  void finish_diagnostics(std::size_t step, std::unique_lock<std::mutex>& lock) {
    if (!engine_.config().diagnostics || !pending_context_ || !pending_report_) return;
    auto ctx = *pending_context_;
    auto report = *pending_report_;
    auto previous = *pending_snapshot_;
    pending_context_.reset();
    pending_report_.reset();
    pending_snapshot_.reset();
    const auto label = steps_[step].label;
    if (!label || report.eval_subset.size() < 2) return;
    auto job = [this, ctx, report, previous, step, y = *label] {
      try {
        auto b = risk_bound_with_realized(report.selected, ctx, y, previous, engine_.features(),
                                          engine_.config().solver, report.eval_subset);
        std::lock_guard lock(mu_);
        steps_[step].bound = b;
        ++revision_;
      } catch (const std::exception&) {
      }
    };
    if (opt_.synchronous) {
      lock.unlock();
      job();
      lock.lock();
    } else if (!cancel_) {
      threads_.emplace_back(std::move(job));
    }
  }

  double accuracy_now() const {
    const auto& c = engine_.config();
    return transductive_accuracy(c.strategy, engine_.features(), engine_.graph(), labels_, c.solver, c.epsilon,
                                 truth_->truth);
  }

  void record_accuracy(std::size_t step) {
    if (truth_) steps_[step].accuracy = accuracy_now();
  }

  std::string id_;
  QueryEngine engine_;
  std::shared_ptr<const AccuracyEvaluator> truth_;
  SessionOptions opt_;
  std::chrono::steady_clock::time_point epoch_;
  std::unique_ptr<EventLog> log_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::atomic<bool> cancel_{false};
  std::vector<std::thread> threads_;

  LabelState labels_;
  std::vector<StepRecord> steps_;
  std::optional<NodeId> outstanding_;
  nlohmann::json context_;
  bool computing_ = false;
  NodeId computing_for_ = -1;
  std::optional<NodeId> ready_next_;
  std::optional<PreemptiveContext> pending_context_;
  std::optional<RiskReport> pending_report_;
  std::optional<LabelState> pending_snapshot_;
  std::optional<double> initial_accuracy_;
  std::optional<std::string> last_error_;
  double first_compute_started_ = 0.0;
  double first_compute_finished_ = 0.0;
  std::uint64_t revision_ = 0;
};

/// Registry of datasets and live sessions.
class SessionManager {
 public:
  struct Options {
    std::optional<std::filesystem::path> log_dir;
    std::function<void()> compute_hook;
  };

  SessionManager() = default;
  explicit SessionManager(Options opt) : opt_(std::move(opt)) {
    if (opt_.log_dir) std::filesystem::create_directories(*opt_.log_dir);
  }
  ~SessionManager() { clear(); }

  /// Registers a dataset; the ground truth (if any) is split off into an
  /// evaluator unless `withhold_truth` is set.
  void register_dataset(const std::string& name, const Dataset& ds, const PrepareOptions& prep = {},
                        bool withhold_truth = false) {
    auto wg = prepare(ds, prep);
    std::shared_ptr<AccuracyEvaluator> eval;
    if (wg.graph.has_labels() && !withhold_truth) eval = std::make_shared<AccuracyEvaluator>(AccuracyEvaluator{wg.graph.labels()});
    wg.graph = wg.graph.without_labels();
    auto data = std::make_shared<EngineDataset>(EngineDataset{name, std::move(wg)});
    std::unique_lock lock(mu_);
    datasets_[name] = Entry{std::move(data), std::move(eval)};
  }

  nlohmann::json datasets() const {
    std::shared_lock lock(mu_);
    auto out = nlohmann::json::array();
    for (const auto& [name, e] : datasets_) {
      const auto& wg = e.data->working;
      out.push_back({{"name", name},
                     {"nodes", wg.graph.node_count()},
                     {"edges", wg.graph.edge_count()},
                     {"features", wg.features.cols()},
                     {"classes", wg.graph.class_count()},
                     {"ground_truth", e.truth != nullptr}});
    }
    return out;
  }

  std::shared_ptr<Session> create(const SessionConfig& cfg, SessionOptions sopt = {}) {
    Entry entry;
    {
      std::shared_lock lock(mu_);
      auto it = datasets_.find(cfg.dataset);
      if (it == datasets_.end()) throw SessionError(404, "unknown dataset '" + cfg.dataset + "'");
      entry = it->second;
    }
    const std::string id = next_id();
    if (opt_.log_dir && !sopt.log_path) sopt.log_path = *opt_.log_dir / (id + ".jsonl");
    if (!sopt.compute_hook) sopt.compute_hook = opt_.compute_hook;
    auto s = std::make_shared<Session>(id, entry.data, entry.truth, cfg, std::move(sopt));
    std::unique_lock lock(mu_);
    sessions_[id] = s;
    return s;
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionError(404, "unknown session '" + id + "'");
    return it->second;
  }

  void remove(const std::string& id) {
    std::shared_ptr<Session> s;
    {
      std::unique_lock lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw SessionError(404, "unknown session '" + id + "'");
      s = std::move(it->second);
      sessions_.erase(it);
    }
    s->shutdown();
  }

  void clear() {
    std::map<std::string, std::shared_ptr<Session>> all;
    {
      std::unique_lock lock(mu_);
      all.swap(sessions_);
    }
    for (auto& [id, s] : all) s->shutdown();
  }

  /// Rebuilds a session from its event log by replaying the submitted labels
  /// with computations run inline. The result is left in AwaitingLabel (or
  /// Idle when finished) under the logged id.
  std::shared_ptr<Session> recover(const std::filesystem::path& log_path) {
    std::ifstream in(log_path);
    if (!in) throw Error("cannot open event log " + log_path.string());
    std::string line, id;
    std::optional<SessionConfig> cfg;
    std::vector<std::pair<NodeId, ClassId>> answers;
    std::vector<NodeId> issued;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto e = nlohmann::json::parse(line);
      const auto kind = e.at("event").get<std::string>();
      if (kind == "create") {
        id = e.at("session").get<std::string>();
        cfg = session_config_from_json(e.at("config"));
      } else if (kind == "label-submitted") {
        answers.emplace_back(e.at("node").get<NodeId>(), e.at("class").get<ClassId>());
      } else if (kind == "query-issued") {
        issued.push_back(e.at("node").get<NodeId>());
      }
    }
    if (!cfg) throw Error("event log has no create event");
    Entry entry;
    {
      std::shared_lock lock(mu_);
      auto it = datasets_.find(cfg->dataset);
      if (it == datasets_.end()) throw SessionError(404, "unknown dataset '" + cfg->dataset + "'");
      entry = it->second;
    }
    SessionOptions sopt;
    sopt.synchronous = true;
    auto s = std::make_shared<Session>(id, entry.data, entry.truth, *cfg, std::move(sopt));
    for (const auto& [node, cls] : answers) s->submit_label(node, cls);
    const auto replayed = replay_queries(s->engine(), answers);
    for (std::size_t i = 0; i < std::min(replayed.size(), issued.size()); ++i)
      if (replayed[i] != issued[i]) throw Error("replayed query sequence diverges from the log");
    s->attach_log(log_path);
    std::unique_lock lock(mu_);
    // keep fresh ids clear of recovered ones
    if (id.size() > 1 && id[0] == 's' && std::all_of(id.begin() + 1, id.end(), ::isdigit))
      counter_ = std::max<std::uint64_t>(counter_, std::stoull(id.substr(1)));
    sessions_[id] = s;
    return s;
  }

 private:
  struct Entry {
    std::shared_ptr<const EngineDataset> data;
    std::shared_ptr<const AccuracyEvaluator> truth;
  };

  std::string next_id() {
    std::unique_lock lock(mu_);
    return "s" + std::to_string(++counter_);
  }

  Options opt_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Entry> datasets_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

}  // namespace graphal
