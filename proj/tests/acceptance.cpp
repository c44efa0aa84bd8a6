// Acceptance harness: one PASS/FAIL line per primary criterion.
//
// Dataset criteria read <dir>/cora.json and <dir>/citeseer.json, where <dir>
// is $GRAPHAL_DATA_DIR or the repository's data/ directory. Set
// GRAPHAL_PROFILE=smoke for the short protocol (5 trials, pool 100,
// eval subset 200, widened accuracy tolerance).
//
// Exit status is 0 only when every criterion passes.

#include "graphal/bench.hpp"
#include "graphal/pregeem.hpp"
#include "graphal/session.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

using namespace graphal;
namespace fs = std::filesystem;

namespace {

// Tolerances and targets, in accuracy points.
constexpr double kCoraGeem30 = 77.2, kCoraGeem10 = 69.8, kCiteseerGeem10 = 65.8;
constexpr double kTol30 = 3.0, kTol10 = 3.5, kSmokeTol = 6.0;
constexpr double kCoraGap = 8.0, kCiteseerGap = 6.0;
constexpr double kPreemptiveGap = 2.5;
constexpr double kInductiveGap = 5.0;
constexpr double kBoundSlack = 1e-9;
constexpr double kOracleTol = 1e-9;
constexpr double kBoundSeconds = 300.0, kOracleSeconds = 60.0;
constexpr double kInductiveHoldout = 0.2;

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s  %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool smoke() {
  const char* p = std::getenv("GRAPHAL_PROFILE");
  return p && std::string(p) == "smoke";
}

fs::path data_dir() {
  if (const char* d = std::getenv("GRAPHAL_DATA_DIR")) return d;
  return fs::path(GRAPHAL_SOURCE_DIR) / "data";
}

// Runs are shared between criteria; keyed by dataset/strategy/protocol.
class Runs {
 public:
  const WorkingGraph* world(const std::string& name) {
    auto it = worlds_.find(name);
    if (it != worlds_.end()) return it->second ? &*it->second : nullptr;
    std::optional<WorkingGraph> wg;
    const auto path = data_dir() / (name + ".json");
    if (fs::exists(path)) {
      try {
        wg = prepare(load_dataset(path.string()), PrepareOptions{});
      } catch (const std::exception& e) {
        std::fprintf(stderr, "cannot load %s: %s\n", path.c_str(), e.what());
      }
    }
    return (worlds_[name] = std::move(wg)) ? &*worlds_[name] : nullptr;
  }

  // Mean accuracy (percent) curve.
  const std::vector<double>& curve(const std::string& name, Strategy s, int experiment,
                                   Setting setting = Setting::Transductive) {
    const std::string key = name + "/" + to_string(s) + "/" + std::to_string(experiment) + "/" +
                            (setting == Setting::Inductive ? "ind" : "tr");
    auto it = curves_.find(key);
    if (it != curves_.end()) return it->second;
    ExperimentConfig c;
    c.dataset = (data_dir() / (name + ".json")).string();
    c.strategy = s;
    c.budget = 30;
    c.seed = 2024;
    if (smoke()) {
      c.profile = "smoke";
      c.trials = 5;
      c.candidate_pool_size = 100;
      c.eval_subset_size = 200;
    }
    RunArtifact art;
    if (experiment == 1) {
      art = run_experiment1(c, *world(name));
    } else {
      c.initial_count = 1;
      c.holdout_fraction = setting == Setting::Inductive ? kInductiveHoldout : 0.0;
      art = run_experiment2(c, *world(name), setting);
    }
    std::vector<double> pct;
    for (double m : art.mean) pct.push_back(100.0 * m);
    return curves_[key] = pct;
  }

 private:
  std::map<std::string, std::optional<WorkingGraph>> worlds_;
  std::map<std::string, std::vector<double>> curves_;
};

bool need(Runs& runs, const std::string& criterion, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (!runs.world(n)) {
      report(false, criterion, std::string("dataset unavailable (") + (data_dir() / n).string() + ".json)");
      return false;
    }
  return true;
}

void cora_geem_accuracy(Runs& runs) {
  const std::string name = "cora-exp1-geem-accuracy";
  if (!need(runs, name, {"cora"})) return;
  const auto& g = runs.curve("cora", Strategy::Geem, 1);
  const double a30 = g[30], a10 = g[10];
  const bool pass = smoke() ? std::abs(a30 - kCoraGeem30) <= kSmokeTol
                            : std::abs(a30 - kCoraGeem30) <= kTol30 && std::abs(a10 - kCoraGeem10) <= kTol10;
  report(pass, name, fmt("b=30 %.2f (target %.1f), b=10 %.2f (target %.1f), profile %s", a30, kCoraGeem30, a10,
                         kCoraGeem10, smoke() ? "smoke" : "full"));
}

void cora_geem_vs_random(Runs& runs) {
  const std::string name = "cora-geem-beats-random";
  if (!need(runs, name, {"cora"})) return;
  const double g = runs.curve("cora", Strategy::Geem, 1)[30];
  const double r = runs.curve("cora", Strategy::Random, 1)[30];
  report(g - r >= kCoraGap, name, fmt("geem %.2f, random %.2f, gap %.2f (need >= %.1f)", g, r, g - r, kCoraGap));
}

void citeseer_geem(Runs& runs) {
  const std::string name = "citeseer-geem-accuracy-and-gap";
  if (!need(runs, name, {"citeseer"})) return;
  const double g = runs.curve("citeseer", Strategy::Geem, 1)[10];
  const double r = runs.curve("citeseer", Strategy::Random, 1)[10];
  const double tol = smoke() ? kSmokeTol : kTol10;
  report(std::abs(g - kCiteseerGeem10) <= tol && g - r >= kCiteseerGap, name,
         fmt("b=10 geem %.2f (target %.1f +- %.1f), random %.2f, gap %.2f (need >= %.1f)", g, kCiteseerGeem10, tol, r,
             g - r, kCiteseerGap));
}

void preemptive_matches_standard(Runs& runs) {
  const std::string name = "pregeem-matches-geem";
  if (!need(runs, name, {"cora", "citeseer"})) return;
  std::string detail;
  bool pass = true;
  for (const char* ds : {"cora", "citeseer"}) {
    const double g = runs.curve(ds, Strategy::Geem, 1)[30];
    const double p = runs.curve(ds, Strategy::Pregeem, 1)[30];
    pass = pass && std::abs(g - p) <= kPreemptiveGap;
    detail += fmt("%s geem %.2f pregeem %.2f; ", ds, g, p);
  }
  report(pass, name, detail + fmt("need |diff| <= %.1f", kPreemptiveGap));
}

void combined_experiment2(Runs& runs) {
  const std::string name = "cora-exp2-combined";
  if (!need(runs, name, {"cora"})) return;
  const auto& c = runs.curve("cora", Strategy::Combined, 2);
  const auto& r = runs.curve("cora", Strategy::Random, 2);
  const auto& ci = runs.curve("cora", Strategy::Combined, 2, Setting::Inductive);
  const bool pass = c[10] > r[10] && c[30] > r[30] && std::abs(ci[30] - c[30]) <= kInductiveGap;
  report(pass, name,
         fmt("transductive combined %.2f/%.2f vs random %.2f/%.2f at b=10/30; inductive b=30 %.2f", c[10], c[30],
             r[10], r[30], ci[30]));
}

// Realized |R_Y - R_Y'| against the bound on random small problems.
void bound_validity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240611);
  const double lambdas[] = {0.5, 1.0, 2.0};
  int instances[4] = {0, 0, 0, 0}, nonvacuous = 0, checked = 0, violations = 0;
  double worst = -1e300;
  SolverConfig cfg;
  cfg.mode = LinkMode::OneVsAll;
  cfg.tol = 1e-10;
  for (int rep = 0; rep < 240; ++rep) {
    const int k = rep % 2 ? 3 : 2;
    const long n = std::uniform_int_distribution<long>(5, 10)(rng);
    const long d = std::uniform_int_distribution<long>(1, 4)(rng);
    const long l = std::uniform_int_distribution<long>(1, n - 3)(rng);
    const auto in = oracle::random_instance(rng, n, d, k, l);
    cfg.lambda = lambdas[rep % 3];
    LabelState prev(in.n, in.k);
    for (std::size_t t = 0; t < in.labelled.size(); ++t) prev.add(in.labelled[t], in.y[t]);
    const NodeId pending = prev.unlabelled().front();
    const auto ctx = make_preemptive_context(in.x, prev, pending, cfg);
    const ClassId truth = (ctx.predicted + 1) % k;
    const auto eval = augmented_labels(prev, ctx).unlabelled();
    ++instances[k];
    for (NodeId q : eval) {
      const auto b = k == 2 ? binary_risk_bound(q, ctx, prev, in.x, cfg, eval)
                            : multiclass_risk_bound(q, ctx, prev, in.x, cfg, eval);
      auto risk_with = [&](ClassId y) {
        auto lab = in.labelled;
        auto ys = in.y;
        lab.push_back(pending);
        ys.push_back(y);
        return oracle::sgc_risk(q, in.x, lab, ys, k, cfg.lambda, false, std::vector<long>(eval.begin(), eval.end()));
      };
      const double realized = std::abs(risk_with(truth) - risk_with(ctx.predicted));
      ++checked;
      if (!b.vacuous()) ++nonvacuous;
      worst = std::max(worst, realized - b.bound);
      if (realized > b.bound + kBoundSlack) ++violations;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = instances[2] >= 100 && instances[3] >= 100 && nonvacuous > 0 && violations == 0 &&
                    secs < kBoundSeconds;
  report(pass, "bound-validity",
         fmt("%d binary + %d three-class instances, %d (query, instance) cases, %d non-vacuous, %d violations, "
             "max(realized - bound) %.3g, %.1fs",
             instances[2], instances[3], checked, nonvacuous, violations, worst, secs));
}

void brute_force_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(8675309);
  int checked = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const long n = std::uniform_int_distribution<long>(3, 8)(rng);
    const int k = std::uniform_int_distribution<int>(2, 3)(rng);
    const long d = std::uniform_int_distribution<long>(1, 4)(rng);
    const long l = std::uniform_int_distribution<long>(1, n - 2)(rng);
    const auto in = oracle::random_instance(rng, n, d, k, l);
    LabelState s(in.n, in.k);
    for (std::size_t t = 0; t < in.labelled.size(); ++t) s.add(in.labelled[t], in.y[t]);
    const auto eval = s.unlabelled();
    for (bool softmax : {true, false}) {
      SolverConfig cfg;
      cfg.mode = softmax ? LinkMode::Softmax : LinkMode::OneVsAll;
      cfg.lambda = rep % 3 == 0 ? 0.5 : 1.0;
      cfg.tol = 1e-11;
      for (NodeId q : eval) {
        const double got = expected_risk(q, s, in.x, cfg, eval);
        const double ref = oracle::sgc_risk(q, in.x, in.labelled, in.y, k, cfg.lambda, softmax,
                                            std::vector<long>(eval.begin(), eval.end()));
        worst = std::max(worst, std::abs(got - ref));
        ++checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  report(worst <= kOracleTol && secs < kOracleSeconds, "brute-force-risk-oracle",
         fmt("%d risks compared, max |diff| %.3g (tol %.0e), %.1fs", checked, worst, kOracleTol, secs));
}

// Scripted oracle answering Δ = 3ν after each query; idle time is read back
// from the event log timestamps.
void preemptive_pipeline() {
  SyntheticSpec spec;
  spec.nodes = 300;
  spec.classes = 4;
  spec.features = 60;
  spec.seed = 17;
  const auto ds = make_synthetic(spec);
  const auto log = fs::temp_directory_path() / "graphal_acceptance_pipeline.jsonl";
  fs::remove(log);

  SessionManager mgr;
  mgr.register_dataset("synthetic", ds);
  const auto wg = prepare(ds, PrepareOptions{});
  SessionConfig c;
  c.dataset = "synthetic";
  c.strategy = Strategy::Pregeem;
  c.seed = 5;
  c.budget = 8;
  c.eval_subset_size = 200;
  c.respond_within_ms = 0;
  c.initial_labels = {{0, wg.graph.labels()[0]}, {1, wg.graph.labels()[1]}};
  SessionOptions so;
  so.log_path = log;
  auto s = mgr.create(c, so);
  const double nu = s->metrics()["first_query_seconds"].get<double>();
  const auto delta = std::chrono::duration<double>(3.0 * nu);

  for (int step = 0; step < c.budget; ++step) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(60);
    while (!s->outstanding() && std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    const auto q = s->outstanding();
    if (!q) break;
    std::this_thread::sleep_for(delta);
    s->submit_label(*q, wg.graph.labels()[static_cast<std::size_t>(*q)]);
  }
  s->wait_idle(std::chrono::seconds(60));
  mgr.clear();

  std::map<int, double> submitted, finished;
  std::ifstream in(log);
  for (std::string line; std::getline(in, line);) {
    const auto e = nlohmann::json::parse(line);
    if (e["event"] == "label-submitted") submitted[e["step"].get<int>()] = e["time"];
    if (e["event"] == "compute-finished") finished[e["step"].get<int>()] = e["time"];
  }
  fs::remove(log);
  int steps = 0, idle_steps = 0;
  double worst_idle = 0.0;
  for (const auto& [step, t_sub] : submitted) {
    if (step + 1 >= c.budget) continue;  // no successor after the last query
    ++steps;
    const auto it = finished.find(step + 1);
    const double idle = it == finished.end() ? 1e9 : std::max(0.0, it->second - t_sub);
    worst_idle = std::max(worst_idle, idle);
    if (idle > 0.0) ++idle_steps;
  }
  report(steps == c.budget - 1 && idle_steps == 0, "preemptive-pipeline-zero-idle",
         fmt("nu %.3fs, delta %.3fs, %d steps with a successor, %d with idle time, max idle %.4fs", nu,
             delta.count(), steps, idle_steps, worst_idle));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// curve.csv without the wall-clock column.
std::string curve_without_timing(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string out;
  for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

void determinism() {
  const auto root = fs::temp_directory_path() / "graphal_acceptance_determinism";
  fs::remove_all(root);
  bool pass = true;
  std::string detail;
  for (int variant = 0; variant < 2; ++variant) {
    ExperimentConfig c;
    SyntheticSpec spec;
    spec.nodes = 120;
    spec.seed = 31;
    c.synthetic = spec;
    c.trials = 3;
    c.budget = 6;
    c.seed = 77;
    c.eval_subset_size = 40;
    c.candidate_pool_size = 25;
    c.bootstrap_resamples = 1000;
    if (variant == 0) {
      c.strategy = Strategy::Pregeem;
      c.bounds = true;
      c.solver.mode = LinkMode::OneVsAll;
    } else {
      c.experiment = 2;
      c.setting = Setting::Inductive;
      c.holdout_fraction = 0.2;
      c.strategy = Strategy::Combined;
    }
    std::vector<fs::path> dirs;
    for (int rerun = 0; rerun < 2; ++rerun) {
      dirs.push_back(root / fmt("v%d_r%d", variant, rerun));
      write_artifacts(run_experiment(c), dirs.back());
    }
    bool same = slurp(dirs[0] / "run.json") == slurp(dirs[1] / "run.json") &&
                curve_without_timing(dirs[0] / "curve.csv") == curve_without_timing(dirs[1] / "curve.csv");
    if (c.bounds) same = same && slurp(dirs[0] / "bounds.csv") == slurp(dirs[1] / "bounds.csv");
    pass = pass && same && !slurp(dirs[0] / "run.json").empty();
    detail += fmt("%s: %s; ", to_string(c.strategy), same ? "identical" : "differs");
  }
  fs::remove_all(root);
  report(pass, "determinism", detail + "run.json, bounds.csv and curve.csv accuracy columns compared byte for byte");
}

}  // namespace

int main() {
  Runs runs;
  cora_geem_accuracy(runs);
  cora_geem_vs_random(runs);
  citeseer_geem(runs);
  preemptive_matches_standard(runs);
  bound_validity();
  brute_force_oracle();
  combined_experiment2(runs);
  preemptive_pipeline();
  determinism();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
