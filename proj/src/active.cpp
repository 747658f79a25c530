#include "rmi/active.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "rmi/errors.hpp"

namespace rmi {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

struct TrajectoryHash {
  std::size_t operator()(const std::vector<StateId>& t) const {
    std::size_t h = 1469598103934665603ull;
    for (StateId s : t) h = (h ^ static_cast<std::size_t>(s)) * 1099511628211ull;
    return h;
  }
};

// Uniformly picks `want` distinct indices out of [0, total).
std::vector<std::uint64_t> sample_indices(std::uint64_t total, std::size_t want, std::mt19937_64& rng) {
  std::vector<std::uint64_t> out;
  if (total <= want) {
    for (std::uint64_t i = 0; i < total; ++i) out.push_back(i);
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  while (out.size() < want) {
    const auto i = pick(rng);
    if (seen.insert(i).second) out.push_back(i);
  }
  return out;
}

// Pairs (i < j) within buckets, drawn uniformly without replacement.
template <typename Emit>
void pairs_within_buckets(const std::vector<std::vector<std::size_t>>& buckets, std::size_t want, std::mt19937_64& rng,
                          Emit emit) {
  std::uint64_t total = 0;
  for (const auto& b : buckets) total += b.size() < 2 ? 0 : b.size() * (b.size() - 1) / 2;
  for (auto idx : sample_indices(total, want, rng)) {
    for (const auto& b : buckets) {
      const std::uint64_t k = b.size();
      const std::uint64_t cnt = k < 2 ? 0 : k * (k - 1) / 2;
      if (idx >= cnt) {
        idx -= cnt;
        continue;
      }
      std::uint64_t i = 0;
      while (idx >= k - 1 - i) {
        idx -= k - 1 - i;
        ++i;
      }
      emit(b[i], b[i + 1 + idx]);
      break;
    }
  }
}

}  // namespace

void ActiveConfig::validate() const {
  if (burn_in_depth < 1) throw InvalidArgument("burn-in depth must be at least 1");
  if (max_depth < burn_in_depth) throw InvalidArgument("max depth must not be below the burn-in depth");
  if (n_active < 1) throw InvalidArgument("n_active must be positive");
  if (candidate_cap < 1) throw InvalidArgument("candidate cap must be positive");
  if (enum_cap < 1) throw InvalidArgument("enumeration cap must be positive");
  if (u_max < 0 || n_ap < 0) throw InvalidArgument("node and proposition budgets must be non-negative");
}

std::vector<Hypothesis> subsample(const HypothesisSet& set, std::size_t n, std::mt19937_64& rng) {
  if (set.empty()) throw InvalidArgument("cannot subsample an empty hypothesis set");
  std::vector<Hypothesis> out;
  for (auto i : sample_indices(set.size(), n, rng)) out.push_back(set.models[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<CandidatePair> generate_candidates(const Hypothesis& h, std::size_t proposer, const MdpModel& mdp, int l,
                                               std::mt19937_64& rng, std::size_t dfs_node_budget,
                                               std::size_t max_pairs) {
  if (l < 1) throw InvalidArgument("candidate depth must be at least 1");
  std::vector<CandidatePair> out;
  if (dfs_node_budget == 0 || max_pairs == 0) return out;

  const int n_states = mdp.num_states();
  const int u = h.num_nodes;
  const int len = l + 1;
  const NodeId target = std::uniform_int_distribution<NodeId>(1, u)(rng);

  // live[r][(s-1)*u + (v-1)]: from (s, v), r more states can end in target.
  std::vector<std::vector<std::uint8_t>> live(static_cast<std::size_t>(len),
                                              std::vector<std::uint8_t>(static_cast<std::size_t>(n_states * u), 0));
  auto at = [u](StateId s, NodeId v) { return static_cast<std::size_t>((s - 1) * u + (v - 1)); };
  for (StateId s = 1; s <= n_states; ++s) live[0][at(s, target)] = 1;
  for (std::size_t r = 1; r < live.size(); ++r)
    for (StateId s = 1; s <= n_states; ++s)
      for (NodeId v = 1; v <= u; ++v)
        for (StateId t : mdp.successors(s))
          if (live[r - 1][at(t, h.step(v, t))]) {
            live[r][at(s, v)] = 1;
            break;
          }

  const std::size_t want_trajectories = std::max<std::size_t>(16, 4 * max_pairs);
  std::vector<std::vector<StateId>> found;
  std::unordered_set<std::vector<StateId>, TrajectoryHash> distinct;
  std::vector<StateId> starts;
  for (StateId s0 : mdp.initial_states())
    if (live[static_cast<std::size_t>(len - 1)][at(s0, h.step(1, s0))]) starts.push_back(s0);
  if (starts.empty()) return out;

  // Each trajectory is a fresh randomized descent from the root. The live
  // table rules out dead ends, so a descent never backtracks.
  std::vector<StateId> path, options;
  std::size_t expansions = 0;
  while (found.size() < want_trajectories && expansions < dfs_node_budget) {
    path.assign(1, starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)]);
    NodeId v = h.step(1, path.back());
    ++expansions;
    for (int remaining = len - 1; remaining > 0; --remaining) {
      options.clear();
      for (StateId t : mdp.successors(path.back()))
        if (live[static_cast<std::size_t>(remaining - 1)][at(t, h.step(v, t))]) options.push_back(t);
      const StateId t = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
      v = h.step(v, t);
      path.push_back(t);
      ++expansions;
    }
    if (distinct.insert(path).second) found.push_back(path);
  }

  std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(n_states));
  for (std::size_t i = 0; i < found.size(); ++i)
    buckets[static_cast<std::size_t>(found[i].back() - 1)].push_back(i);
  pairs_within_buckets(buckets, max_pairs, rng, [&](std::size_t a, std::size_t b) {
    out.push_back({found[a], found[b], proposer, target});
  });

  for (const auto& c : out)
    if (rm_run(h, c.tau) != target || rm_run(h, c.tau_prime) != target || c.tau.back() != c.tau_prime.back())
      throw InvariantViolation("candidate pair does not meet its proposer's target");
  return out;
}

std::size_t quality(const CandidatePair& pair, std::span<const Hypothesis> sample) {
  std::size_t collapse = 0;
  for (const auto& h : sample)
    if (rm_run(h, pair.tau) == rm_run(h, pair.tau_prime)) ++collapse;
  return std::min(collapse, sample.size() - collapse);
}

void rank_candidates(std::vector<CandidatePair>& pool, std::span<const Hypothesis> sample, std::mt19937_64& rng) {
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> scored;  // (quality, index)
  scored.reserve(pool.size());
  for (auto i : order) scored.emplace_back(quality(pool[i], sample), i);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<CandidatePair> ranked;
  ranked.reserve(pool.size());
  for (const auto& [q, i] : scored) ranked.push_back(std::move(pool[i]));
  pool = std::move(ranked);
}

std::vector<NegativePair> query_batch(std::span<const CandidatePair> pairs, const HistoryOracle& oracle,
                                      std::size_t budget, PrefixTree& tree,
                                      std::vector<std::vector<StateId>>* queried, double eps) {
  std::vector<NegativePair> out;
  const std::size_t n = std::min(budget, pairs.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pair = pairs[i];
    const RowMap a = oracle.query_all(pair.tau);
    const RowMap b = oracle.query_all(pair.tau_prime);
    if (queried) {
      queried->push_back(pair.tau);
      queried->push_back(pair.tau_prime);
    }
    const auto witness = find_witness(a, b, eps);
    if (!witness) continue;
    const auto na = tree.insert(pair.tau);
    const auto nb = tree.insert(pair.tau_prime);
    out.push_back({na, nb, *witness});
  }
  return out;
}

Hypothesis embed(const Hypothesis& h, int u_max, int n_ap) {
  if (u_max < h.num_nodes || n_ap < h.num_props)
    throw InvalidArgument("budgets are smaller than the machine being embedded");
  Hypothesis out;
  out.num_nodes = u_max;
  out.num_props = n_ap;
  out.labeling = h.labeling;
  out.delta_u.resize(static_cast<std::size_t>(u_max * n_ap));
  for (NodeId i = 1; i <= u_max; ++i)
    for (PropId p = 1; p <= n_ap; ++p) out.next(i, p) = (i <= h.num_nodes && p <= h.num_props) ? h.next(i, p) : i;
  return out;
}

void ActiveReport::write_csv(std::ostream& out) const {
  out << "depth,raw_count,class_count,pairs_queried,negatives_added,seconds,truncated,truth_admitted,candidates,"
         "stored_trajectories,tree_nodes,oracle_queries,seed\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{},{},{:.6f},{},{},{},{},{},{},{}\n", r.depth, r.raw_count, r.class_count,
                       r.pairs_queried, r.negatives_added, r.seconds, r.truncated ? 1 : 0, r.truth_admitted ? 1 : 0,
                       r.candidates, r.stored_trajectories, r.tree_nodes, r.oracle_queries, seed);
}

ExhaustiveResult run_exhaustive(const Fixture& fixture, const HistoryOracle& oracle, int depth,
                                const EncodingParams& params, const NegativeMode& negatives, std::size_t enum_cap,
                                std::size_t tree_cap, double eps) {
  ExhaustiveResult res;
  auto start = Clock::now();
  res.tree = enumerate_prefix_tree(fixture.mdp, depth, params.non_stuttering, tree_cap);
  res.partition = compute_signatures(res.tree, oracle, eps);
  res.branches = static_cast<std::size_t>(count_trajectories(fixture.mdp, depth, false));
  res.negative_pairs = res.partition.negative_pair_count();
  if (negatives.kind == NegativeMode::per_terminal_sample)
    res.pairs = materialize_negatives(res.partition, res.tree, negatives);
  res.discovery_seconds = since(start);

  start = Clock::now();
  res.instance = std::make_unique<CnfInstance>(params, fixture.mdp.num_states());
  if (negatives.kind == NegativeMode::all) {
    res.instance->add_partition(res.tree, res.partition);
  } else {
    res.instance->add_pairs(res.tree, res.pairs);
    res.pairs_encoded = res.pairs.size();
  }
  res.set = enumerate_all(*res.instance, enum_cap);
  res.sat_seconds = since(start);
  if (params.u_max >= fixture.truth.num_nodes() && params.n_ap >= fixture.truth.num_props())
    res.truth_admitted = res.instance->admits(embed(fixture.truth.model, params.u_max, params.n_ap));
  return res;
}

namespace {

// Proposes the ranked pairs to query at depth l (trajectories of l+1 states).
using Proposer = std::function<std::vector<CandidatePair>(const HypothesisSet&, int, std::mt19937_64&, double&)>;

ActiveReport run_loop(const ActiveConfig& cfg, const Fixture& fixture, const HistoryOracle& oracle,
                      const std::string& mode, const Proposer& propose) {
  cfg.validate();
  const auto t_total = Clock::now();
  EncodingParams params{cfg.u_max ? cfg.u_max : fixture.truth.num_nodes(),
                        cfg.n_ap ? cfg.n_ap : fixture.truth.num_props(), fixture.non_stuttering,
                        cfg.conflict_budget,
                        cfg.random_phase ? std::optional<std::uint64_t>(cfg.seed) : std::nullopt};
  const bool can_embed = params.u_max >= fixture.truth.num_nodes() && params.n_ap >= fixture.truth.num_props();
  const Hypothesis truth = can_embed ? embed(fixture.truth.model, params.u_max, params.n_ap) : fixture.truth.model;

  ActiveReport report;
  report.mode = mode;
  report.seed = cfg.seed;
  std::mt19937_64 rng(cfg.seed);

  NegativeMode burn_mode = cfg.burn_in_negatives;
  burn_mode.seed = cfg.seed;
  const auto t_burn = Clock::now();
  ExhaustiveResult burn = run_exhaustive(fixture, oracle, cfg.burn_in_depth, params, burn_mode, cfg.enum_cap,
                                         cfg.tree_cap, cfg.eps_policy);
  PrefixTree tree = std::move(burn.tree);
  CnfInstance& inst = *burn.instance;
  HypothesisSet set = std::move(burn.set);
  report.burn_in_branches = burn.branches;
  report.burn_in_negative_pairs = burn.negative_pairs;
  report.discovery_seconds += burn.discovery_seconds;
  report.sat_seconds += burn.sat_seconds;

  std::unordered_set<std::vector<StateId>, TrajectoryHash> stored;
  auto record = [&](int depth, std::size_t candidates, std::size_t queried, std::size_t added, double secs) {
    DepthRecord r;
    r.depth = depth;
    r.raw_count = set.size();
    r.truncated = set.truncated;
    r.class_count = canonical_classes(set).size();
    r.candidates = candidates;
    r.pairs_queried = queried;
    r.negatives_added = added;
    r.seconds = secs;
    r.truth_admitted = can_embed && inst.admits(truth);
    r.stored_trajectories = report.burn_in_branches + stored.size();
    r.tree_nodes = tree.size();
    r.oracle_queries = oracle.query_count();
    report.rows.push_back(r);
  };
  record(cfg.burn_in_depth, 0, 0, static_cast<std::size_t>(burn.negative_pairs), since(t_burn));

  int l = cfg.burn_in_depth;
  auto is_converged = [&] { return !set.truncated && converged(set); };
  while (!is_converged() && l < cfg.max_depth && !set.empty()) {
    const auto t_depth = Clock::now();
    double discovery = 0.0;
    const auto ranked = propose(set, l, rng, discovery);
    report.discovery_seconds += discovery;

    const auto t_query = Clock::now();
    std::vector<std::vector<StateId>> queried;
    const auto negatives = query_batch(ranked, oracle, cfg.budget, tree, &queried, cfg.eps_policy);
    report.pair_bytes += negatives.size() * kNegativePairBytes;
    for (auto& q : queried) stored.insert(std::move(q));
    report.query_seconds += since(t_query);

    const auto t_sat = Clock::now();
    add_negatives_incremental(inst, negatives, tree);
    set = enumerate_all(inst, cfg.enum_cap);
    report.sat_seconds += since(t_sat);

    ++l;
    record(l, ranked.size(), std::min(cfg.budget, ranked.size()), negatives.size(), since(t_depth));
  }
  std::ostringstream tree_blob;
  tree.write_binary(tree_blob);
  report.tree_bytes = tree_blob.str().size();
  report.converged = is_converged();
  report.final_depth = l;
  report.final_set = std::move(set);
  report.total_seconds = since(t_total);
  return report;
}

}  // namespace

ActiveReport run_active(const ActiveConfig& cfg, const Fixture& fixture, const HistoryOracle& oracle) {
  auto propose = [&](const HypothesisSet& set, int l, std::mt19937_64& rng, double& seconds) {
    const auto start = Clock::now();
    const auto sample = subsample(set, cfg.n_active, rng);
    const std::size_t per_h = std::max<std::size_t>(1, (cfg.candidate_cap + sample.size() - 1) / sample.size());
    std::vector<CandidatePair> pool;
    std::set<std::pair<std::vector<StateId>, std::vector<StateId>>> seen;
    for (std::size_t i = 0; i < sample.size() && pool.size() < cfg.candidate_cap; ++i) {
      for (auto& c : generate_candidates(sample[i], i, fixture.mdp, l, rng, cfg.dfs_node_budget, per_h)) {
        if (pool.size() >= cfg.candidate_cap) break;
        auto key = std::minmax(c.tau, c.tau_prime);
        if (!seen.emplace(key.first, key.second).second) continue;
        pool.push_back(std::move(c));
      }
    }
    rank_candidates(pool, sample, rng);
    seconds = since(start);
    return pool;
  };
  return run_loop(cfg, fixture, oracle, "active", propose);
}

std::vector<StateId> random_trajectory(const MdpModel& mdp, int len, std::mt19937_64& rng) {
  if (len < 1) throw InvalidArgument("trajectory length must be at least 1");
  const auto n = static_cast<std::size_t>(mdp.num_states());
  // ways[r][s-1]: feasible continuations of r more states after s.
  std::vector<std::vector<double>> ways(static_cast<std::size_t>(len), std::vector<double>(n, 1.0));
  for (std::size_t r = 1; r < ways.size(); ++r)
    for (StateId s = 1; s <= static_cast<StateId>(n); ++s) {
      double w = 0.0;
      for (StateId t : mdp.successors(s)) w += ways[r - 1][static_cast<std::size_t>(t - 1)];
      ways[r][static_cast<std::size_t>(s - 1)] = w;
    }
  auto pick = [&](const std::vector<StateId>& options, std::size_t r) {
    std::vector<double> weights;
    for (StateId t : options) weights.push_back(ways[r][static_cast<std::size_t>(t - 1)]);
    std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
    return options[dist(rng)];
  };
  std::vector<StateId> tau{pick(mdp.initial_states(), static_cast<std::size_t>(len - 1))};
  for (int r = len - 2; r >= 0; --r) tau.push_back(pick(mdp.successors(tau.back()), static_cast<std::size_t>(r)));
  return tau;
}

ActiveReport run_random_baseline(const ActiveConfig& cfg, const Fixture& fixture, const HistoryOracle& oracle) {
  auto propose = [&](const HypothesisSet&, int l, std::mt19937_64& rng, double& seconds) {
    const auto start = Clock::now();
    std::vector<CandidatePair> pool;
    if (cfg.budget > 0) {
      const std::size_t walks = 4 * cfg.budget;
      std::vector<std::vector<StateId>> found;
      std::unordered_set<std::vector<StateId>, TrajectoryHash> distinct;
      for (std::size_t i = 0; i < walks; ++i) {
        auto tau = random_trajectory(fixture.mdp, l + 1, rng);
        if (distinct.insert(tau).second) found.push_back(std::move(tau));
      }
      std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(fixture.mdp.num_states()));
      for (std::size_t i = 0; i < found.size(); ++i)
        buckets[static_cast<std::size_t>(found[i].back() - 1)].push_back(i);
      pairs_within_buckets(buckets, cfg.budget, rng,
                           [&](std::size_t a, std::size_t b) { pool.push_back({found[a], found[b], 0, 0}); });
    }
    seconds = since(start);
    return pool;
  };
  return run_loop(cfg, fixture, oracle, "random_baseline", propose);
}

}  // namespace rmi
