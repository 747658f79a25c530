// Command-line driver: rmi --mode exhaustive|active|random_baseline|verify ...

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rmi/errors.hpp"
#include "rmi/experiment.hpp"
#include "rmi/fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Identify labeled reward machines from history-policy evidence"};
  rmi::RunSpec spec;
  std::string mode = "exhaustive";
  bool force_no_stutter = false;
  bool allow_stutter = false;
  bool list = false;

  app.add_option("--mode", mode, "exhaustive | active | random_baseline | verify");
  app.add_option("--fixture", spec.fixture, "builtin fixture name");
  app.add_option("--config", spec.config_path, "fixture file (overrides --fixture)");
  app.add_option("--depth", spec.depth, "exhaustive depth; max depth in active modes (default burn-in + 7)");
  app.add_option("--burn-in", spec.burn_in, "burn-in depth for active modes");
  app.add_option("--budget", spec.budget, "pairs queried per depth");
  app.add_option("--n-active", spec.n_active, "hypotheses sampled per depth");
  app.add_option("--trials", spec.trials, "independent trials");
  app.add_option("--seed", spec.seed, "seed of trial 0; trial k uses seed + k");
  app.add_option("--cap", spec.cap, "hypothesis enumeration cap");
  app.add_option("--eps-policy", spec.eps_policy, "sup-norm tolerance for policy rows");
  app.add_flag("--no-stutter", force_no_stutter, "enforce the non-stuttering constraint and compress traces");
  app.add_flag("--allow-stutter", allow_stutter, "drop the non-stuttering constraint and trace compression");
  app.add_option("--u-max", spec.u_max, "node budget (default: ground-truth size)");
  app.add_option("--n-ap", spec.n_ap, "proposition budget (default: ground-truth size)");
  app.add_option("--sample", spec.sample_per_group, "sample this many pairs per terminal-state group (0 = all)");
  app.add_option("--tree-cap", spec.tree_cap, "maximum stored prefixes");
  app.add_flag("--random-phase", spec.random_phase, "random decision signs during enumeration (active modes)");
  app.add_option("--cache", spec.cache_path, "write the exhaustive trace cache here");
  app.add_option("--out", spec.out_dir, "output directory");
  app.add_flag("--list-fixtures", list, "print builtin fixture names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (list) {
    for (const auto& name : rmi::builtin_fixture_names()) std::cout << name << '\n';
    return 0;
  }
  try {
    if (force_no_stutter && allow_stutter) throw rmi::InvalidArgument("--no-stutter and --allow-stutter conflict");
    if (force_no_stutter) spec.non_stuttering = true;
    if (allow_stutter) spec.non_stuttering = false;
    spec.mode = rmi::parse_run_mode(mode);
    if (const char* budget = std::getenv("RMI_SAT_CONFLICTS")) spec.conflict_budget = std::atoll(budget);
    return rmi::run(spec, std::cout);
  } catch (const rmi::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
