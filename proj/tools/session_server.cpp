// Serves the labelling-session API.
//
//   session_server --dataset cora=data/cora.json --port 8080
//   session_server --synthetic demo --port 8080

#include "graphal/service.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Active-learning labelling session server"};
  std::vector<std::string> datasets, synthetic;
  std::string host = "127.0.0.1", log_dir;
  int port = 8080;
  bool withhold = false;
  app.add_option("--dataset", datasets, "name=path of a dataset container (repeatable)");
  app.add_option("--synthetic", synthetic, "register a synthetic dataset under this name (repeatable)");
  app.add_option("--host", host, "Bind address");
  app.add_option("--port", port, "Port");
  app.add_option("--log-dir", log_dir, "Directory for per-session event logs");
  app.add_flag("--withhold-truth", withhold, "Do not report accuracy even if labels are present");
  CLI11_PARSE(app, argc, argv);

  graphal::SessionManager::Options opt;
  if (!log_dir.empty()) opt.log_dir = log_dir;
  graphal::SessionManager sessions(opt);
  try {
    for (const auto& spec : datasets) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) {
        std::cerr << "--dataset expects name=path\n";
        return 2;
      }
      sessions.register_dataset(spec.substr(0, eq), graphal::load_dataset(spec.substr(eq + 1)), {}, withhold);
    }
    for (const auto& name : synthetic)
      sessions.register_dataset(name, graphal::make_synthetic({}), {}, withhold);
  } catch (const graphal::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return 3;
  }

  httplib::Server server;
  graphal::install_routes(server, sessions);
  std::cout << "listening on " << host << ":" << port << std::endl;
  if (!server.listen(host, port)) {
    std::cerr << "cannot bind " << host << ":" << port << "\n";
    return 1;
  }
  return 0;
}
