#pragma once

// Multi-trial experiment driver behind the command-line tool.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rmi/active.hpp"
#include "rmi/fixture.hpp"

namespace rmi {

enum class RunMode { exhaustive, active, random_baseline, verify };

RunMode parse_run_mode(const std::string& name);
std::string to_string(RunMode mode);

struct RunSpec {
  RunMode mode = RunMode::exhaustive;
  std::string fixture;      // builtin name
  std::string config_path;  // fixture file; wins over `fixture`
  int depth = 0;            // exhaustive depth, or active max depth
  int burn_in = 6;
  std::size_t budget = 250;
  std::size_t n_active = 200;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::size_t cap = 10000;  // hypothesis enumeration cap
  double eps_policy = kEpsPolicy;
  std::optional<bool> non_stuttering;  // overrides the fixture's setting
  int u_max = 0;                       // 0: ground-truth size
  int n_ap = 0;
  /// 0 encodes every separated pair; k > 0 samples k pairs per terminal group.
  std::size_t sample_per_group = 0;
  std::size_t tree_cap = kDefaultTreeCap;
  std::int64_t conflict_budget = -1;
  bool random_phase = false;
  std::string out_dir = "out";
  std::string cache_path;  // exhaustive mode trace cache

  void validate() const;
};

/// Loads the fixture a spec names and applies its overrides.
Fixture load_run_fixture(const RunSpec& spec);

struct MemoryReport {
  std::string mode;
  int depth = 0;
  double stored_trajectories = 0.0;
  std::size_t tree_nodes = 0;
  double negative_pairs = 0.0;
  bool pairs_materialized = false;
  std::size_t tree_bytes = 0;
  std::size_t pair_bytes = 0;
};

MemoryReport emit_memory_report(const ExhaustiveResult& result, int depth);
MemoryReport emit_memory_report(const ActiveReport& report);
void write_memory_table(std::ostream& out, const std::vector<MemoryReport>& rows);

/// Per-depth mean and sample standard deviation over trials. A trial that
/// stopped early contributes its last row to every later depth.
struct AggregateRow {
  int depth = 0;
  std::size_t trials = 0;
  double raw_mean = 0.0, raw_std = 0.0;
  double class_mean = 0.0, class_std = 0.0;
  double converged_fraction = 0.0;
};
std::vector<AggregateRow> aggregate(const std::vector<ActiveReport>& reports);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

/// Separated pairs among all feasible trajectories of at most `depth`
/// states, counted by dynamic programming over the product (no
/// enumeration). Unordered pairs.
double count_negative_pairs(const Fixture& fixture, const ProductPolicy& policy, int depth, double eps = kEpsPolicy);

/// Runs every trial, writes reports under spec.out_dir and a summary to
/// `log`. Returns the process exit status.
int run(const RunSpec& spec, std::ostream& log);

}  // namespace rmi
