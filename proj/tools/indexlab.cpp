// indexlab command line: run, converge, acceptance.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "indexlab/acceptance.hpp"
#include "indexlab/config.hpp"
#include "indexlab/harness.hpp"

namespace {

int run_experiment(const std::string& path, const std::string& out, int workers, bool verbose, bool require_converge) {
  using namespace indexlab;
  ExperimentConfig config;
  try {
    config = load_config(path);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << path << ": " << e.what() << '\n';
    return 2;
  }
  if (require_converge && config.experiment != ExperimentKind::converge) {
    std::cerr << "configuration error: " << path << ": experiment is '" << to_string(config.experiment)
              << "', converge needs 'converge'\n";
    return 2;
  }
  RunOptions opt;
  if (!out.empty()) opt.output_dir = out;
  opt.workers = workers;
  opt.verbose = verbose;
  return run(config, opt);
}

int run_acceptance(const std::string& path, const std::vector<std::string>& criteria, bool criteria_given,
                   bool verbose) {
  using namespace indexlab;
  acceptance::Options opt;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) {
      std::cerr << "configuration error: cannot read '" << path << "'\n";
      return 2;
    }
    std::stringstream text;
    text << in.rdbuf();
    try {
      opt = acceptance::parse_options(text.str());
    } catch (const ConfigError& e) {
      std::cerr << "configuration error: " << path << ": " << e.what() << '\n';
      return 2;
    }
  }
  if (criteria_given) opt.criteria = criteria;
  opt.verbose = opt.verbose || verbose;
  return acceptance::run(opt);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"indexlab: homological index experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", indexlab::library_version);

  std::string config, out;
  int workers = 0;
  bool verbose = false;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("--config", config, "experiment config (JSON)")->required();
  run->add_option("--out", out, "output directory (overrides output_dir)");
  run->add_option("--workers", workers, "worker threads (0: use the config)")->check(CLI::NonNegativeNumber);
  run->add_flag("--verbose", verbose, "progress on stderr");

  auto* conv = app.add_subcommand("converge", "run a convergence ladder config");
  conv->add_option("--config", config, "experiment config with experiment = converge")->required();
  conv->add_option("--out", out, "output directory (overrides output_dir)");
  conv->add_option("--workers", workers, "worker threads (0: use the config)")->check(CLI::NonNegativeNumber);
  conv->add_flag("--verbose", verbose, "progress on stderr");

  std::vector<std::string> criteria;
  auto* acc = app.add_subcommand("acceptance", "run the acceptance criteria");
  acc->add_option("--config", config, "acceptance config (JSON)");
  auto* crit = acc->add_option("--criteria", criteria, "criterion ids, e.g. A1,A3 (empty string: none)")
                   ->delimiter(',');
  acc->add_option("--workers", workers, "accepted for symmetry; criteria run serially")
      ->check(CLI::NonNegativeNumber);
  acc->add_flag("--verbose", verbose, "print every check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return run_experiment(config, out, workers, verbose, false);
    if (*conv) return run_experiment(config, out, workers, verbose, true);
    std::vector<std::string> ids;
    for (const auto& c : criteria)
      if (!c.empty()) ids.push_back(c);
    return run_acceptance(config, ids, crit->count() > 0, verbose);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
