#include "rmi/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "rmi/errors.hpp"
#include "rmi/verify.hpp"

namespace rmi {

namespace fs = std::filesystem;

RunMode parse_run_mode(const std::string& name) {
  if (name == "exhaustive") return RunMode::exhaustive;
  if (name == "active") return RunMode::active;
  if (name == "random_baseline" || name == "random") return RunMode::random_baseline;
  if (name == "verify") return RunMode::verify;
  throw InvalidArgument("unknown mode '" + name + "' (exhaustive, active, random_baseline, verify)");
}

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::exhaustive: return "exhaustive";
    case RunMode::active: return "active";
    case RunMode::random_baseline: return "random_baseline";
    case RunMode::verify: return "verify";
  }
  return "?";
}

void RunSpec::validate() const {
  if (fixture.empty() && config_path.empty()) throw InvalidArgument("a fixture name or --config file is required");
  if (trials < 1) throw InvalidArgument("--trials must be at least 1");
  if (cap < 1) throw InvalidArgument("--cap must be at least 1");
  if (!(eps_policy > 0.0)) throw InvalidArgument("--eps-policy must be positive");
  if (mode == RunMode::exhaustive && depth < 1) throw InvalidArgument("exhaustive mode needs --depth >= 1");
  if ((mode == RunMode::active || mode == RunMode::random_baseline)) {
    if (burn_in < 1) throw InvalidArgument("--burn-in must be at least 1");
    if (depth != 0 && depth < burn_in) throw InvalidArgument("--depth must not be below --burn-in");
    if (mode == RunMode::active && n_active < 1) throw InvalidArgument("--n-active must be at least 1");
  }
}

Fixture load_run_fixture(const RunSpec& spec) {
  Fixture fx = spec.config_path.empty() ? builtin_fixture(spec.fixture) : load_fixture_file(spec.config_path);
  if (spec.non_stuttering) fx.non_stuttering = *spec.non_stuttering;
  return fx;
}

namespace {

std::size_t tree_bytes(const PrefixTree& tree) {
  std::ostringstream blob;
  tree.write_binary(blob);
  return blob.str().size();
}

ActiveReport exhaustive_report(const ExhaustiveResult& res, int depth, std::uint64_t seed, double seconds,
                               std::uint64_t queries) {
  ActiveReport rep;
  rep.mode = "exhaustive";
  rep.seed = seed;
  DepthRecord r;
  r.depth = depth;
  r.raw_count = res.set.size();
  r.truncated = res.set.truncated;
  r.class_count = canonical_classes(res.set).size();
  r.negatives_added = res.pairs_encoded ? res.pairs_encoded : static_cast<std::size_t>(res.negative_pairs);
  r.seconds = seconds;
  r.truth_admitted = res.truth_admitted;
  r.stored_trajectories = res.branches;
  r.tree_nodes = res.tree.size();
  r.oracle_queries = queries;
  rep.rows.push_back(r);
  rep.converged = !res.set.truncated && canonical_classes(res.set).size() == 1;
  rep.final_depth = depth;
  rep.burn_in_branches = res.branches;
  rep.burn_in_negative_pairs = res.negative_pairs;
  rep.discovery_seconds = res.discovery_seconds;
  rep.sat_seconds = res.sat_seconds;
  rep.total_seconds = seconds;
  rep.tree_bytes = tree_bytes(res.tree);
  rep.pair_bytes = res.pairs.size() * kNegativePairBytes;
  rep.final_set = res.set;
  return rep;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
}

void write_summary(std::ostream& out, const std::vector<ActiveReport>& reports) {
  out << fmt::format("{:>5} {:>8} {:>16} {:>6} {:>12} {:>14} {:>10} {:>10} {:>10} {:>10} {:>8} {:>6} {:>9}\n", "trial",
                     "seed", "mode", "depth", "|tau|", "|E-|", "discov_s", "sat_s", "total_s", "solutions", "classes",
                     "conv", "truth_in");
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    const auto& last = r.rows.back();
    std::size_t negatives = static_cast<std::size_t>(r.burn_in_negative_pairs);
    for (std::size_t i = 1; i < r.rows.size(); ++i) negatives += r.rows[i].negatives_added;
    const bool truth_everywhere =
        std::all_of(r.rows.begin(), r.rows.end(), [](const DepthRecord& d) { return d.truth_admitted; });
    out << fmt::format("{:>5} {:>8} {:>16} {:>6} {:>12} {:>14} {:>10.3f} {:>10.3f} {:>10.3f} {:>9}{} {:>8} {:>6} {:>9}\n", k,
                       r.seed, r.mode, last.depth, last.stored_trajectories, negatives, r.discovery_seconds,
                       r.sat_seconds, r.total_seconds, last.raw_count, last.truncated ? "+" : " ", last.class_count,
                       r.converged ? "yes" : "no", truth_everywhere ? "yes" : "no");
  }
}

int run_verify(const RunSpec& spec, const Fixture& fx, const ProductPolicy& policy, std::ostream& log) {
  HistoryOracle oracle(fx.mdp, fx.truth, policy);
  const int u_max = spec.u_max ? spec.u_max : fx.truth.num_nodes();
  const int n_ap = spec.n_ap ? spec.n_ap : fx.truth.num_props();
  const int n_states = fx.mdp.num_states();
  const int l_star = sufficient_depth(n_states, u_max);
  const int max_depth = spec.depth > 0 ? spec.depth : l_star;
  const EncodingParams params{u_max, n_ap, fx.non_stuttering, spec.conflict_budget, std::nullopt};
  const bool truth_fits = u_max >= fx.truth.num_nodes() && n_ap >= fx.truth.num_props();
  const Hypothesis truth = truth_fits ? embed(fx.truth.model, u_max, n_ap) : fx.truth.model;
  bool ok = true;
  for (int d = 1; d <= max_depth; ++d) {
    const PrefixTree tree = enumerate_prefix_tree(fx.mdp, d, false, spec.tree_cap);
    const SignaturePartition part = compute_signatures(tree, oracle, spec.eps_policy);
    const HypothesisSet brute = brute_force_feasible(tree, part, u_max, n_ap, n_states, fx.non_stuttering);
    CnfInstance inst(params, n_states);
    inst.add_partition(tree, part);
    const HypothesisSet sat = enumerate_all(inst, std::max(spec.cap, brute.size() + 1));
    bool agree = same_hypotheses(brute, sat);
    std::string pair_note = "pairs skipped";
    if (part.negative_pair_count() <= 200000.0) {
      const auto pairs = materialize_negatives(part, tree, NegativeMode::everything());
      CnfInstance by_pairs(params, n_states);
      by_pairs.add_pairs(tree, pairs);
      agree = agree && same_hypotheses(brute, enumerate_all(by_pairs, std::max(spec.cap, brute.size() + 1)));
      pair_note = fmt::format("{} pairs", pairs.size());
    }
    const bool truth_in = !truth_fits || contains_up_to_renaming(brute, truth);
    log << fmt::format("depth {:>3}: prefixes {:>8}  classes {}  feasible {:>6}  sat {:>6}  ({})  {}\n", d, tree.size(),
                       part.num_classes(), brute.size(), sat.size(), pair_note, agree && truth_in ? "ok" : "MISMATCH");
    ok = ok && agree && truth_in;
  }
  const bool stable = check_depth_stabilization(fx, oracle, u_max, n_ap, l_star);
  log << fmt::format("feasible set at depth {} {} the set at depth {}\n", l_star, stable ? "equals" : "differs from",
                     l_star + 1);
  ok = ok && stable;
  log << (ok ? "oracle cross-check passed\n" : "oracle cross-check FAILED\n");
  return ok ? 0 : 3;
}

}  // namespace

MemoryReport emit_memory_report(const ExhaustiveResult& result, int depth) {
  MemoryReport m;
  m.mode = "exhaustive";
  m.depth = depth;
  m.stored_trajectories = static_cast<double>(result.branches);
  m.tree_nodes = result.tree.size();
  m.negative_pairs = result.negative_pairs;
  m.pairs_materialized = result.pairs_encoded > 0;
  m.tree_bytes = tree_bytes(result.tree);
  m.pair_bytes = result.pairs.size() * kNegativePairBytes;
  return m;
}

MemoryReport emit_memory_report(const ActiveReport& report) {
  MemoryReport m;
  m.mode = report.mode;
  if (report.rows.empty()) return m;
  const auto& last = report.rows.back();
  m.depth = last.depth;
  m.stored_trajectories = static_cast<double>(last.stored_trajectories);
  m.tree_nodes = last.tree_nodes;
  m.negative_pairs = report.burn_in_negative_pairs;
  for (std::size_t i = 1; i < report.rows.size(); ++i) m.negative_pairs += static_cast<double>(report.rows[i].negatives_added);
  m.pairs_materialized = report.mode != "exhaustive" && report.rows.size() > 1;
  m.tree_bytes = report.tree_bytes;
  m.pair_bytes = report.pair_bytes;
  return m;
}

void write_memory_table(std::ostream& out, const std::vector<MemoryReport>& rows) {
  out << fmt::format("{:>16} {:>6} {:>14} {:>11} {:>16} {:>12} {:>12} {:>12}\n", "mode", "depth", "|tau|", "tree_nodes",
                     "|E-|", "materialized", "tree_bytes", "pair_bytes");
  for (const auto& m : rows)
    out << fmt::format("{:>16} {:>6} {:>14.0f} {:>11} {:>16.0f} {:>12} {:>12} {:>12}\n", m.mode, m.depth,
                       m.stored_trajectories, m.tree_nodes, m.negative_pairs, m.pairs_materialized ? "yes" : "no",
                       m.tree_bytes, m.pair_bytes);
}

std::vector<AggregateRow> aggregate(const std::vector<ActiveReport>& reports) {
  std::vector<AggregateRow> out;
  if (reports.empty()) return out;
  int lo = reports.front().rows.front().depth, hi = lo;
  for (const auto& r : reports) {
    lo = std::min(lo, r.rows.front().depth);
    hi = std::max(hi, r.rows.back().depth);
  }
  for (int d = lo; d <= hi; ++d) {
    AggregateRow row;
    row.depth = d;
    std::vector<double> raw, cls;
    double conv = 0.0;
    for (const auto& r : reports) {
      const DepthRecord* rec = nullptr;
      for (const auto& x : r.rows)
        if (x.depth <= d) rec = &x;
      if (!rec) continue;
      raw.push_back(static_cast<double>(rec->raw_count));
      cls.push_back(static_cast<double>(rec->class_count));
      if (!rec->truncated && rec->class_count == 1) conv += 1.0;
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    };
    row.trials = raw.size();
    if (row.trials == 0) continue;
    stats(raw, row.raw_mean, row.raw_std);
    stats(cls, row.class_mean, row.class_std);
    row.converged_fraction = conv / static_cast<double>(row.trials);
    out.push_back(row);
  }
  return out;
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "depth,trials,raw_mean,raw_std,class_mean,class_std,converged_fraction\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", r.depth, r.trials, r.raw_mean, r.raw_std,
                       r.class_mean, r.class_std, r.converged_fraction);
}

double count_negative_pairs(const Fixture& fixture, const ProductPolicy& policy, int depth, double eps) {
  const auto& mdp = fixture.mdp;
  const auto& m = fixture.truth.model;
  const int n_states = mdp.num_states();
  const int n_nodes = m.num_nodes;
  auto at = [n_nodes](StateId s, NodeId u) { return static_cast<std::size_t>((s - 1) * n_nodes + (u - 1)); };
  std::vector<double> cur(static_cast<std::size_t>(n_states * n_nodes), 0.0), next(cur.size());
  std::vector<double> per_node(static_cast<std::size_t>(n_nodes) + 1, 0.0);
  for (StateId s : mdp.initial_states()) cur[at(s, m.step(1, s))] += 1.0;
  for (int len = 1; len <= depth; ++len) {
    for (StateId s = 1; s <= n_states; ++s)
      for (NodeId u = 1; u <= n_nodes; ++u) per_node[static_cast<std::size_t>(u)] += cur[at(s, u)];
    if (len == depth) break;
    std::fill(next.begin(), next.end(), 0.0);
    for (StateId s = 1; s <= n_states; ++s)
      for (NodeId u = 1; u <= n_nodes; ++u)
        if (cur[at(s, u)] > 0.0)
          for (StateId t : mdp.successors(s)) next[at(t, m.step(u, t))] += cur[at(s, u)];
    cur.swap(next);
  }
  auto rows_of = [&](NodeId u) {
    RowMap r;
    for (StateId s = 1; s <= n_states; ++s) r.rows.push_back(policy.row(s, u));
    return r;
  };
  double total = 0.0;
  for (NodeId u = 1; u <= n_nodes; ++u)
    for (NodeId v = u + 1; v <= n_nodes; ++v)
      if (find_witness(rows_of(u), rows_of(v), eps))
        total += per_node[static_cast<std::size_t>(u)] * per_node[static_cast<std::size_t>(v)];
  return total;
}

int run(const RunSpec& spec, std::ostream& log) {
  spec.validate();
  const Fixture fx = load_run_fixture(spec);
  const ProductPolicy policy = soft_value_iteration(fx.product(), {fx.lambda});
  fs::create_directories(spec.out_dir);
  const fs::path out(spec.out_dir);

  if (spec.mode == RunMode::verify) {
    std::ostringstream text;
    const int status = run_verify(spec, fx, policy, text);
    write_file(out / "verify.txt", text.str());
    log << text.str();
    return status;
  }

  std::vector<ActiveReport> reports;
  std::vector<MemoryReport> memory;
  for (std::size_t k = 0; k < spec.trials; ++k) {
    const std::uint64_t seed = spec.seed + k;
    HistoryOracle oracle(fx.mdp, fx.truth, policy);
    ActiveReport rep;
    if (spec.mode == RunMode::exhaustive) {
      const auto start = std::chrono::steady_clock::now();
      const EncodingParams params{spec.u_max ? spec.u_max : fx.truth.num_nodes(),
                                  spec.n_ap ? spec.n_ap : fx.truth.num_props(), fx.non_stuttering,
                                  spec.conflict_budget, std::nullopt};
      const NegativeMode negatives =
          spec.sample_per_group ? NegativeMode::sample(spec.sample_per_group, seed) : NegativeMode::everything();
      ExhaustiveResult res =
          run_exhaustive(fx, oracle, spec.depth, params, negatives, spec.cap, spec.tree_cap, spec.eps_policy);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (!spec.cache_path.empty())
        write_trace_cache(spec.cache_path, {fx.hash(), spec.depth, spec.eps_policy}, res.tree, res.pairs);
      rep = exhaustive_report(res, spec.depth, seed, secs, oracle.query_count());
      MemoryReport mem = emit_memory_report(res, spec.depth);
      mem.negative_pairs = count_negative_pairs(fx, policy, spec.depth, spec.eps_policy);
      memory.push_back(mem);
    } else {
      ActiveConfig cfg;
      cfg.burn_in_depth = spec.burn_in;
      cfg.n_active = spec.n_active;
      cfg.budget = spec.budget;
      cfg.seed = seed;
      cfg.max_depth = spec.depth ? spec.depth : spec.burn_in + 7;
      cfg.enum_cap = spec.cap;
      cfg.u_max = spec.u_max;
      cfg.n_ap = spec.n_ap;
      cfg.eps_policy = spec.eps_policy;
      cfg.tree_cap = spec.tree_cap;
      cfg.conflict_budget = spec.conflict_budget;
      cfg.random_phase = spec.random_phase;
      if (spec.sample_per_group) cfg.burn_in_negatives = NegativeMode::sample(spec.sample_per_group, seed);
      rep = spec.mode == RunMode::active ? run_active(cfg, fx, oracle) : run_random_baseline(cfg, fx, oracle);
      memory.push_back(emit_memory_report(rep));
    }
    std::ostringstream csv;
    rep.write_csv(csv);
    write_file(out / fmt::format("trial_{}.csv", k), csv.str());
    std::ostringstream json;
    write_hypotheses_json(json, rep.final_set);
    write_file(out / fmt::format("hypotheses_{}.json", k), json.str());
    log << fmt::format("trial {} (seed {}): depth {}, {} solutions{}, {} class(es)\n", k, seed,
                       rep.rows.back().depth, rep.rows.back().raw_count, rep.rows.back().truncated ? "+" : "",
                       rep.rows.back().class_count);
    reports.push_back(std::move(rep));
  }

  std::ostringstream agg;
  write_aggregate_csv(agg, aggregate(reports));
  write_file(out / "aggregate.csv", agg.str());
  std::ostringstream summary;
  summary << fmt::format("fixture {}  mode {}  trials {}\n\n", fx.name, to_string(spec.mode), spec.trials);
  write_summary(summary, reports);
  summary << '\n';
  write_memory_table(summary, memory);
  write_file(out / "summary.txt", summary.str());
  log << '\n' << summary.str();
  return 0;
}

}  // namespace rmi
