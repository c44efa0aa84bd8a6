// bench run --config <file> [--outdir <dir>] [--trials N]
//
// Exit codes: 0 success, 1 usage or internal error, 2 config error,
// 3 dataset error.

#include "graphal/bench.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Active-learning benchmark runner"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  std::string config_path, outdir;
  int trials = 0;
  bool quiet = false;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--outdir", outdir, "Override the output directory");
  run->add_option("--trials", trials, "Override the trial count");
  run->add_flag("--quiet", quiet, "Suppress the summary table");
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = graphal::load_experiment_config(config_path);
    if (!outdir.empty()) cfg.outdir = outdir;
    if (trials > 0) cfg.trials = trials;
    const auto art = graphal::run_experiment(cfg);
    graphal::write_artifacts(art, cfg.outdir);
    if (!quiet) {
      std::cout << "step  mean_acc  ci_low  ci_high\n";
      for (std::size_t s = 0; s < art.mean.size(); ++s)
        std::printf("%4zu  %.4f  %.4f  %.4f\n", s, art.mean[s], art.ci_low[s], art.ci_high[s]);
      std::cout << "wrote " << cfg.outdir << "\n";
    }
  } catch (const graphal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const graphal::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
