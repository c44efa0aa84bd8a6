#include <catch_amalgamated.hpp>

#include "graphal/bench.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace graphal;
using Catch::Matchers::WithinAbs;

namespace {

ExperimentConfig small_config(Strategy s, int experiment = 1) {
  ExperimentConfig c;
  SyntheticSpec spec;
  spec.nodes = 48;
  spec.seed = 4;
  c.synthetic = spec;
  c.experiment = experiment;
  c.strategy = s;
  c.trials = 3;
  c.budget = 4;
  c.initial_count = 2;
  c.eval_subset_size = 20;
  c.candidate_pool_size = 10;
  c.bootstrap_resamples = 500;
  c.seed = 9;
  return c;
}

WorkingGraph world_for(const ExperimentConfig& c) { return prepare(load_experiment_dataset(c), c.prepare); }

const Strategy kAll[] = {Strategy::Random, Strategy::Geem, Strategy::Pregeem, Strategy::Combined,
                         Strategy::LpOnly};

}  // namespace

TEST_CASE("strategy names round-trip") {
  for (Strategy s : kAll) CHECK(strategy_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(strategy_from_string("age"), ConfigError);
}

TEST_CASE("config parsing") {
  SECTION("defaults follow the full protocol") {
    const auto c = experiment_config_from_json({{"dataset", "x.json"}});
    CHECK(c.trials == 20);
    CHECK(c.eval_subset_size == 500);
    CHECK(c.candidate_pool_size == 0);
    CHECK(c.prepare.hops == 2);
    CHECK(c.solver.lambda == 1.0);
    CHECK(c.initial_labels_for(2485) == 12);
    CHECK(c.initial_labels_for(10) == 1);
  }
  SECTION("smoke profile") {
    const auto c = experiment_config_from_json({{"dataset", "x.json"}, {"profile", "smoke"}});
    CHECK(c.trials == 5);
    CHECK(c.candidate_pool_size == 100);
    CHECK(c.eval_subset_size == 200);
    const auto d = experiment_config_from_json({{"dataset", "x.json"}, {"profile", "smoke"}, {"trials", 2}});
    CHECK(d.trials == 2);
  }
  SECTION("experiment 2 starts from one label") {
    const auto c = experiment_config_from_json({{"dataset", "x.json"}, {"experiment", 2}});
    CHECK(c.initial_labels_for(2485) == 1);
  }
  SECTION("round trip through JSON") {
    auto c = small_config(Strategy::Combined, 2);
    c.setting = Setting::Inductive;
    c.holdout_fraction = 0.25;
    const auto back = experiment_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
  }
  SECTION("errors") {
    using J = nlohmann::json;
    CHECK_THROWS_AS(experiment_config_from_json(J::array()), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"trials", 3}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"trials", "many"}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"test_fraction", 1.0}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"initial_fraction", 0.0}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"budget", -1}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"lambda", 0}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"mode", "probit"}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"profile", "huge"}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", "x"}, {"setting", "inductive"}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"dataset", {{"synthetic", {{"nodez", 3}}}}}}), ConfigError);
    CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
  }
}

TEST_CASE("bootstrap intervals") {
  const std::vector<double> same(6, 0.42);
  const auto [a, b] = bootstrap_ci(same, 1000, 1);
  CHECK(a == 0.42);
  CHECK(b == 0.42);

  const std::vector<double> two{0.0, 1.0};
  const auto [lo2, hi2] = bootstrap_ci(two, 5000, 2);
  CHECK(lo2 < 0.5);
  CHECK(hi2 > 0.5);

  const std::vector<double> five{1, 2, 3, 4, 5};
  const auto [lo, hi] = bootstrap_ci(five, 10000, 0);
  const auto [rlo, rhi] = oracle::bootstrap(five, 10000, 12345);
  CHECK_THAT(lo, WithinAbs(rlo, 0.05));
  CHECK_THAT(hi, WithinAbs(rhi, 0.05));
  CHECK(bootstrap_ci(five, 10000, 0) == bootstrap_ci(five, 10000, 0));

  CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{1.0}, 10, 0), InvalidArgument);
}

TEST_CASE("budget zero gives the initial accuracy only") {
  auto c = small_config(Strategy::Geem);
  c.budget = 0;
  const auto r = run_experiment(c, world_for(c));
  CHECK(r.mean.size() == 1);
  for (const auto& t : r.trials) CHECK(t.accuracy.size() == 1);
}

TEST_CASE("all strategies share the initial model and partition") {
  std::vector<double> first;
  std::vector<std::vector<NodeId>> initial, evaluation;
  for (Strategy s : kAll) {
    auto c = small_config(s);
    const auto r = run_experiment(c, world_for(c));
    first.push_back(r.trials[0].accuracy[0]);
    initial.push_back(r.trials[0].initial);
    evaluation.push_back(r.trials[0].evaluation);
  }
  // SGC-predicting strategies share the initial model exactly
  CHECK(first[0] == first[1]);
  CHECK(first[0] == first[2]);
  for (std::size_t i = 1; i < initial.size(); ++i) {
    CHECK(initial[i] == initial[0]);
    CHECK(evaluation[i] == evaluation[0]);
  }
}

TEST_CASE("curves are valid and queries avoid the evaluation nodes") {
  for (Strategy s : kAll)
    for (int experiment : {1, 2}) {
      auto c = small_config(s, experiment);
      if (experiment == 2) {
        c.setting = Setting::Inductive;
        c.holdout_fraction = 0.2;
        c.initial_count.reset();
      }
      const auto r = run_experiment(c, world_for(c));
      REQUIRE(r.mean.size() == static_cast<std::size_t>(c.budget) + 1);
      for (std::size_t i = 0; i < r.mean.size(); ++i) {
        CHECK(r.mean[i] >= 0.0);
        CHECK(r.mean[i] <= 1.0);
        CHECK(r.ci_low[i] <= r.mean[i] + 1e-12);
        CHECK(r.mean[i] <= r.ci_high[i] + 1e-12);
      }
      for (const auto& t : r.trials) {
        CHECK_FALSE(t.evaluation.empty());
        std::set<NodeId> seen(t.initial.begin(), t.initial.end());
        for (NodeId q : t.queries) {
          CHECK(std::find(t.evaluation.begin(), t.evaluation.end(), q) == t.evaluation.end());
          CHECK(seen.insert(q).second);
        }
        for (NodeId i : t.initial)
          CHECK(std::find(t.evaluation.begin(), t.evaluation.end(), i) == t.evaluation.end());
        if (s == Strategy::Combined) CHECK(t.model_weights.size() == t.queries.size());
      }
    }
}

TEST_CASE("runs are byte-for-byte reproducible") {
  for (Strategy s : {Strategy::Geem, Strategy::Pregeem, Strategy::Combined}) {
    auto c = small_config(s);
    const auto wg = world_for(c);
    const auto a = to_json(run_experiment(c, wg)).dump();
    const auto b = to_json(run_experiment(c, wg)).dump();
    CHECK(a == b);
  }
}

TEST_CASE("inductive with no held-out nodes equals transductive") {
  for (Strategy s : {Strategy::Geem, Strategy::Combined}) {
    auto c = small_config(s, 2);
    c.initial_count.reset();
    const auto wg = world_for(c);
    const auto t = run_experiment2(c, wg, Setting::Transductive);
    const auto i = run_experiment2(c, wg, Setting::Inductive);
    for (std::size_t k = 0; k < t.trials.size(); ++k) {
      CHECK(t.trials[k].queries == i.trials[k].queries);
      CHECK(t.trials[k].accuracy == i.trials[k].accuracy);
    }
  }
}

TEST_CASE("single-node working graph yields a one-point curve") {
  auto c = small_config(Strategy::Geem, 2);
  c.initial_count.reset();
  c.synthetic.reset();
  Dataset ds{"one", Graph(1, 2, {}, {1}), FeatureMatrix::from_dense(Matrix::Ones(1, 2))};
  c.dataset = "inline";
  const auto r = run_experiment(c, prepare(ds));
  CHECK(r.mean.size() == 1);
  CHECK(r.mean[0] == 1.0);
}

TEST_CASE("budget larger than the pool is a config error") {
  auto c = small_config(Strategy::Random);
  c.budget = 1000;
  CHECK_THROWS_AS(run_experiment(c, world_for(c)), ConfigError);
  auto d = small_config(Strategy::Random, 2);
  d.setting = Setting::Inductive;
  d.holdout_fraction = 0.999;
  CHECK_THROWS_AS(run_experiment(d, world_for(d)), ConfigError);
}

TEST_CASE("datasets without ground truth are rejected") {
  auto c = small_config(Strategy::Random);
  Dataset ds{"blind", Graph(3, 2, {{0, 1}, {1, 2}}), FeatureMatrix::from_dense(Matrix::Identity(3, 3))};
  CHECK_THROWS_AS(run_experiment(c, prepare(ds)), DatasetError);
}

TEST_CASE("preemptive bound diagnostics hold during a run") {
  auto c = small_config(Strategy::Pregeem);
  c.bounds = true;
  c.budget = 5;
  c.synthetic->classes = 2;
  const auto r = run_experiment(c, world_for(c));
  std::size_t rows = 0;
  for (const auto& t : r.trials)
    for (const auto& b : t.bounds) {
      ++rows;
      CHECK(b.realized <= b.bound + 1e-9);
      CHECK(b.bound >= 0.0);
    }
  CHECK(rows > 0);
  CHECK(bounds_csv(r).rfind("trial,step,query,bound,realized,vacuous_count\n", 0) == 0);
}

TEST_CASE("artifacts are written") {
  auto c = small_config(Strategy::Geem);
  c.budget = 2;
  c.bounds = false;
  const auto r = run_experiment(c, world_for(c));
  const auto dir = std::filesystem::temp_directory_path() / "graphal_bench_artifacts";
  std::filesystem::remove_all(dir);
  write_artifacts(r, dir);
  CHECK(std::filesystem::exists(dir / "run.json"));
  CHECK(std::filesystem::exists(dir / "timing.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "bounds.csv"));
  std::ifstream in(dir / "curve.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,mean_acc,ci_low,ci_high,mean_step_seconds");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 3);
  std::ifstream js(dir / "run.json");
  const auto j = nlohmann::json::parse(js);
  CHECK(j["trials"].size() == 3);
  CHECK_FALSE(j.dump().find("seconds") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("transductive accuracy counts unlabelled nodes only") {
  const Graph g(4, 2, {{0, 1}, {2, 3}});
  Matrix x(4, 1);
  x << 1, 1, -1, -1;
  LabelState s(4, 2);
  s.add(0, 1);
  s.add(2, 0);
  const std::vector<ClassId> truth{1, 1, 0, 1};
  const double acc = transductive_accuracy(Strategy::Geem, x, g, s, SolverConfig{}, kDefaultEpsilon, truth);
  CHECK(acc == 0.5);
  CHECK(accuracy_of(Matrix(0, 2), {}) == 1.0);
}
